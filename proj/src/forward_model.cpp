#include "ebmri/forward_model.hpp"

#include "ebmri/numerics.hpp"
#include "ebmri/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace ebmri {

namespace {

void check_shapes(const RealGrid &mask, const CoilSet &coils) {
  if (coils.empty()) throw std::invalid_argument("sense operator needs at least one coil");
  for (const auto &c : coils)
    if (c.rows() != mask.rows() || c.cols() != mask.cols())
      throw std::invalid_argument("coil shape does not match mask shape");
}

/// Spin density u / rss(coils) with 0/0 := 0; throws where rss = 0, u != 0.
RealGrid spin_density(const RealGrid &u, const RealGrid &rho) {
  if (!u.same_shape(rho)) throw std::invalid_argument("image/coil shape mismatch");
  RealGrid x(u.rows(), u.cols());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (rho[i] == 0.0) {
      if (u[i] != 0.0) throw std::domain_error("rss(Sigma) vanishes where the image does not");
      x[i] = 0.0;
    } else {
      x[i] = u[i] / rho[i];
    }
  }
  return x;
}

/// Masked residuals r_c = mask * fft2(sigma_c * x) - z_c.
CoilSet residuals(const RealGrid &x, const CoilSet &coils, const MeasuredData &z,
                  const RealGrid &mask) {
  CoilSet r;
  r.reserve(coils.size());
  for (std::size_t c = 0; c < coils.size(); ++c) {
    ComplexGrid img(x.rows(), x.cols());
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = coils[c][i] * x[i];
    ComplexGrid k = fft2(img);
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = mask[i] * k[i] - z.planes[c][i];
    r.push_back(std::move(k));
  }
  return r;
}

} // namespace

SenseOperator::SenseOperator(const SamplingMask &m, CoilSet c)
    : mask(m.dft_layout()), coils(std::move(c)) {
  check_shapes(mask, coils);
}

SenseOperator::SenseOperator(RealGrid mask_dft, CoilSet c)
    : mask(std::move(mask_dft)), coils(std::move(c)) {
  check_shapes(mask, coils);
}

MeasuredData apply_A(const RealGrid &x, const SenseOperator &op) {
  if (x.rows() != op.mask.rows() || x.cols() != op.mask.cols())
    throw std::invalid_argument("image shape does not match operator shape");
  MeasuredData z;
  z.planes.reserve(op.coils.size());
  for (const auto &coil : op.coils) {
    ComplexGrid img(x.rows(), x.cols());
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = coil[i] * x[i];
    ComplexGrid k = fft2(img);
    for (std::size_t i = 0; i < k.size(); ++i) k[i] *= op.mask[i];
    z.planes.push_back(std::move(k));
  }
  return z;
}

ComplexGrid apply_A_adjoint(const MeasuredData &z, const SenseOperator &op) {
  if (z.planes.size() != op.coils.size())
    throw std::invalid_argument("coil count mismatch between data and operator");
  ComplexGrid out(op.mask.rows(), op.mask.cols(), cplx(0.0, 0.0));
  for (std::size_t c = 0; c < op.coils.size(); ++c) {
    ComplexGrid k = z.planes[c];
    for (std::size_t i = 0; i < k.size(); ++i) k[i] *= op.mask[i];
    ComplexGrid img = ifft2(k);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += std::conj(op.coils[c][i]) * img[i];
  }
  return out;
}

MeasuredData simulate_measurement(const RealGrid &x, const CoilSet &coils,
                                  const SamplingMask &mask, double noise_std,
                                  std::uint64_t seed) {
  if (noise_std < 0.0) throw std::invalid_argument("noise_std must be >= 0");
  SenseOperator op(mask, coils);
  MeasuredData z = apply_A(x, op);
  z.noise_std = noise_std;
  if (noise_std > 0.0) {
    Rng rng(seed);
    for (auto &plane : z.planes)
      for (std::size_t i = 0; i < plane.size(); ++i)
        if (op.mask[i] != 0.0)
          plane[i] += cplx(noise_std * rng.normal(), noise_std * rng.normal());
  }
  return z;
}

double data_term(const RealGrid &u, const CoilSet &coils, const MeasuredData &z,
                 const RealGrid &mask_dft) {
  check_shapes(mask_dft, coils);
  const RealGrid rho = rss(coils);
  const RealGrid x = spin_density(u, rho);
  const CoilSet r = residuals(x, coils, z, mask_dft);
  return 0.5 * norm_sq(r);
}

RealGrid grad_u_data(const RealGrid &u, const CoilSet &coils, const MeasuredData &z,
                     const RealGrid &mask_dft) {
  check_shapes(mask_dft, coils);
  const RealGrid rho = rss(coils);
  const RealGrid x = spin_density(u, rho);
  const CoilSet r = residuals(x, coils, z, mask_dft);
  RealGrid g(u.rows(), u.cols(), 0.0);
  for (std::size_t c = 0; c < coils.size(); ++c) {
    ComplexGrid k = r[c];
    for (std::size_t i = 0; i < k.size(); ++i) k[i] *= mask_dft[i];
    const ComplexGrid b = ifft2(k);
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += (std::conj(b[i]) * coils[c][i]).real();
  }
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = rho[i] == 0.0 ? 0.0 : g[i] / rho[i];
  return g;
}

CoilSet grad_sigma_data(const RealGrid &u, const CoilSet &coils, const MeasuredData &z,
                        const RealGrid &mask_dft) {
  check_shapes(mask_dft, coils);
  const RealGrid rho = rss(coils);
  const RealGrid x = spin_density(u, rho);
  const CoilSet r = residuals(x, coils, z, mask_dft);

  CoilSet back;
  back.reserve(coils.size());
  for (std::size_t c = 0; c < coils.size(); ++c) {
    ComplexGrid k = r[c];
    for (std::size_t i = 0; i < k.size(); ++i) k[i] *= mask_dft[i];
    back.push_back(ifft2(k));
  }

  // beta = Re(sum_c conj(b_c) sigma_c); the sensitivity gradient per pixel is
  // (u/rho) b_c - (beta u / rho^3) sigma_c, the rho^3 term coming from the
  // dependence of the rss normalization on sigma.
  RealGrid beta(u.rows(), u.cols(), 0.0);
  for (std::size_t c = 0; c < coils.size(); ++c)
    for (std::size_t i = 0; i < beta.size(); ++i)
      beta[i] += (std::conj(back[c][i]) * coils[c][i]).real();

  CoilSet grad;
  grad.reserve(coils.size());
  for (std::size_t c = 0; c < coils.size(); ++c) {
    ComplexGrid g(u.rows(), u.cols(), cplx(0.0, 0.0));
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (rho[i] == 0.0) continue;
      const double alpha = u[i] / rho[i];
      const double shrink = beta[i] * u[i] / (rho[i] * rho[i] * rho[i]);
      g[i] = alpha * back[c][i] - shrink * coils[c][i];
    }
    grad.push_back(std::move(g));
  }
  return grad;
}

std::pair<RealGrid, CoilSet> zf_rss_init(const MeasuredData &z, const RealGrid &mask_dft) {
  if (z.planes.empty()) throw std::invalid_argument("no measured planes");
  CoilSet images;
  images.reserve(z.planes.size());
  for (const auto &plane : z.planes) {
    ComplexGrid k = plane;
    for (std::size_t i = 0; i < k.size(); ++i) k[i] *= mask_dft[i];
    images.push_back(ifft2(k));
  }
  RealGrid u0 = rss(images);
  CoilSet sigma;
  sigma.reserve(images.size());
  for (const auto &img : images) {
    ComplexGrid s(u0.rows(), u0.cols(), cplx(0.0, 0.0));
    for (std::size_t i = 0; i < s.size(); ++i)
      if (u0[i] != 0.0) s[i] = img[i] / u0[i];
    sigma.push_back(std::move(s));
  }
  return {std::move(u0), std::move(sigma)};
}

} // namespace ebmri
