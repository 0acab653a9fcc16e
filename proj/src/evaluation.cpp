#include "ebmri/evaluation.hpp"

#include "ebmri/numerics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace ebmri {

namespace {

void check_same_shape(const RealGrid &a, const RealGrid &b) {
  if (!a.same_shape(b)) throw std::invalid_argument("image shapes differ");
}

} // namespace

double psnr(const RealGrid &x, const RealGrid &ref) {
  check_same_shape(x, ref);
  double mse = 0, peak = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - ref[i];
    mse += d * d;
    peak = std::max(peak, ref[i]);
  }
  mse /= static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double psnr_capped(const RealGrid &x, const RealGrid &ref) {
  return std::min(psnr(x, ref), 300.0);
}

double nmse(const RealGrid &x, const RealGrid &ref) {
  check_same_shape(x, ref);
  const double den = norm_sq(ref);
  if (den == 0.0) throw std::invalid_argument("nmse: zero reference");
  double num = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - ref[i];
    num += d * d;
  }
  return num / den;
}

double ssim(const RealGrid &x, const RealGrid &ref) {
  check_same_shape(x, ref);
  constexpr int W = 7;
  if (x.rows() < W || x.cols() < W) throw std::invalid_argument("ssim needs >= 7x7 images");
  double lo = ref[0], hi = ref[0];
  for (std::size_t i = 0; i < ref.size(); ++i) {
    lo = std::min(lo, ref[i]);
    hi = std::max(hi, ref[i]);
  }
  const double L = hi - lo;
  const double c1 = (0.01 * L) * (0.01 * L);
  const double c2 = (0.03 * L) * (0.03 * L);
  const double n = W * W;

  double acc = 0;
  long windows = 0;
  for (int r = 0; r + W <= x.rows(); ++r)
    for (int c = 0; c + W <= x.cols(); ++c) {
      double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < W; ++i)
        for (int j = 0; j < W; ++j) {
          const double a = x(r + i, c + j), b = ref(r + i, c + j);
          sx += a;
          sy += b;
          sxx += a * a;
          syy += b * b;
          sxy += a * b;
        }
      const double mx = sx / n, my = sy / n;
      const double vx = sxx / n - mx * mx;
      const double vy = syy / n - my * my;
      const double cov = sxy / n - mx * my;
      acc += ((2 * mx * my + c1) * (2 * cov + c2)) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++windows;
    }
  return acc / static_cast<double>(windows);
}

Metrics evaluate_pair(const RealGrid &x, const RealGrid &ref) {
  return {psnr_capped(x, ref), nmse(x, ref), ssim(x, ref)};
}

NullSpaceResidual null_space_residual(const CoilSet &sigma, const CoilSet &full_kspace) {
  if (sigma.size() != full_kspace.size())
    throw std::invalid_argument("coil count mismatch");
  const std::size_t C = sigma.size();
  CoilSet images;
  images.reserve(C);
  for (const auto &z : full_kspace) images.push_back(ifft2(z));

  const RealGrid rho = rss(sigma);
  NullSpaceResidual out;
  out.per_coil.reserve(C);

  const int R = rho.rows(), Cc = rho.cols();
  ComplexGrid proj(R, Cc, cplx(0, 0)); // sum_i conj(sigma_i) u_i
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < proj.size(); ++i)
      proj[i] += std::conj(sigma[c][i]) * images[c][i];

  for (std::size_t c = 0; c < C; ++c) {
    ComplexGrid pi(R, Cc);
    for (std::size_t i = 0; i < pi.size(); ++i) {
      if (rho[i] == 0.0)
        pi[i] = -images[c][i];
      else
        pi[i] = sigma[c][i] / (rho[i] * rho[i]) * proj[i] - images[c][i];
    }
    out.per_coil.push_back(std::move(pi));
  }
  out.rss_map = rss(out.per_coil);
  out.norm = std::sqrt(norm_sq(out.per_coil));
  return out;
}

namespace {

std::vector<double> spline_basis(const std::vector<double> &knots, double x) {
  // Truncated power basis: cubics plus one (x - k)^3_+ per interior knot.
  std::vector<double> b = {1.0, x, x * x, x * x * x};
  for (std::size_t i = 1; i + 1 < knots.size(); ++i) {
    const double t = x - knots[i];
    b.push_back(t > 0 ? t * t * t : 0.0);
  }
  return b;
}

} // namespace

SplineCalibration spline_fit(const std::vector<double> &recon_vals,
                             const std::vector<double> &ref_vals) {
  if (recon_vals.size() != ref_vals.size())
    throw std::invalid_argument("scatter arrays differ in length");
  if (recon_vals.size() < 5) throw std::invalid_argument("need at least 5 points");
  double lo = recon_vals[0], hi = recon_vals[0];
  for (double v : recon_vals) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi == lo) throw std::invalid_argument("degenerate abscissae");

  SplineCalibration s;
  s.knots.resize(5);
  for (int i = 0; i < 5; ++i) s.knots[i] = lo + (hi - lo) * i / 4.0;

  const int dim = 7;
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd atb = Eigen::VectorXd::Zero(dim);
  for (std::size_t p = 0; p < recon_vals.size(); ++p) {
    const auto b = spline_basis(s.knots, recon_vals[p]);
    for (int i = 0; i < dim; ++i) {
      atb(i) += b[i] * ref_vals[p];
      for (int j = 0; j < dim; ++j) ata(i, j) += b[i] * b[j];
    }
  }
  // Mild ridge keeps the normal equations solvable when the scatter does not
  // populate every knot interval.
  ata += 1e-10 * Eigen::MatrixXd::Identity(dim, dim);
  const Eigen::VectorXd c = ata.ldlt().solve(atb);
  s.coeffs.assign(c.data(), c.data() + dim);
  return s;
}

double spline_apply(const SplineCalibration &s, double x) {
  const auto b = spline_basis(s.knots, x);
  double v = 0;
  for (std::size_t i = 0; i < b.size(); ++i) v += s.coeffs[i] * b[i];
  return v;
}

RealGrid spline_apply(const SplineCalibration &s, const RealGrid &g) {
  RealGrid out(g.rows(), g.cols());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = spline_apply(s, g[i]);
  return out;
}

LambdaFit lambda_fit(const std::vector<double> &residuum, const std::vector<double> &lambda_opt) {
  if (residuum.size() != lambda_opt.size() || residuum.size() < 2)
    throw std::invalid_argument("need at least two validation pairs");
  const double n = static_cast<double>(residuum.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < residuum.size(); ++i) {
    sx += residuum[i];
    sy += lambda_opt[i];
    sxx += residuum[i] * residuum[i];
    sxy += residuum[i] * lambda_opt[i];
  }
  const double denom = n * sxx - sx * sx;
  LambdaFit f;
  if (denom == 0.0) { // all abscissae equal: flat fit through the mean
    f.slope = 0.0;
    f.intercept = sy / n;
  } else {
    f.slope = (n * sxy - sx * sy) / denom;
    f.intercept = (sy - f.slope * sx) / n;
  }
  return f;
}

double lambda_predict(const LambdaFit &fit, double residuum) {
  return std::max(fit.slope * residuum + fit.intercept, 1e-6);
}

double initial_residuum(const MeasuredData &z, const RealGrid &mask_dft) {
  auto [u0, sigma0] = zf_rss_init(z, mask_dft);
  SenseOperator op(mask_dft, sigma0);
  const MeasuredData pred = apply_A(u0, op);
  double s = 0;
  for (std::size_t c = 0; c < pred.planes.size(); ++c)
    for (std::size_t i = 0; i < pred.planes[c].size(); ++i)
      s += std::norm(pred.planes[c][i] - z.planes[c][i]);
  return s;
}

std::vector<double> radial_profile(const RealGrid &g, int bins) {
  if (bins < 1) throw std::invalid_argument("need at least one bin");
  const double cr = (g.rows() - 1) / 2.0, cc = (g.cols() - 1) / 2.0;
  const double rmax = std::hypot(cr + 0.5, cc + 0.5);
  std::vector<double> sum(bins, 0.0);
  std::vector<long> count(bins, 0);
  for (int r = 0; r < g.rows(); ++r)
    for (int c = 0; c < g.cols(); ++c) {
      const double d = std::hypot(r - cr, c - cc);
      int b = static_cast<int>(d / rmax * bins);
      b = std::min(b, bins - 1);
      sum[b] += g(r, c);
      ++count[b];
    }
  std::vector<double> out(bins, 0.0);
  for (int b = 0; b < bins; ++b)
    if (count[b] > 0) out[b] = sum[b] / static_cast<double>(count[b]);
  return out;
}

LandscapeProjection landscape_projection(const std::vector<RealGrid> &trajectory,
                                         const ImagePrior &reg, double temperature, int grid_pts,
                                         double extent) {
  if (trajectory.size() < 3) throw std::invalid_argument("need at least 3 trajectory samples");
  const std::size_t K = trajectory.size() - 1; // differences against the last state
  const std::size_t n = trajectory.front().size();
  const RealGrid &last = trajectory.back();

  Eigen::MatrixXd M(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < n; ++i)
      M(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
          trajectory[k][i] - last[i];

  const Eigen::RowVectorXd row_mean = M.colwise().mean();
  M.rowwise() -= row_mean;

  const Eigen::MatrixXd gram = M * M.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const auto &evals = eig.eigenvalues(); // ascending
  const double e1 = evals(evals.size() - 1);
  const double e2 = evals(evals.size() - 2);
  if (e2 <= 1e-12 * std::max(1.0, e1))
    throw std::invalid_argument("trajectory difference matrix has rank < 2");

  const auto direction = [&](Eigen::Index which) {
    Eigen::VectorXd v = M.transpose() * eig.eigenvectors().col(which);
    v.normalize();
    return v;
  };
  const Eigen::VectorXd v1 = direction(evals.size() - 1);
  const Eigen::VectorXd v2 = direction(evals.size() - 2);

  LandscapeProjection out;
  out.v1.assign(v1.data(), v1.data() + v1.size());
  out.v2.assign(v2.data(), v2.data() + v2.size());

  // Lattice center: x_bar = last + mean of differences.
  out.origin = last;
  for (std::size_t i = 0; i < n; ++i) out.origin[i] += row_mean(static_cast<Eigen::Index>(i));

  for (const auto &x : trajectory) {
    double p1 = 0, p2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = x[i] - out.origin[i];
      p1 += d * out.v1[i];
      p2 += d * out.v2[i];
    }
    out.xi1.push_back(p1);
    out.xi2.push_back(p2);
  }

  out.extent = extent;
  if (out.extent <= 0.0) {
    for (std::size_t k = 0; k < out.xi1.size(); ++k)
      out.extent = std::max({out.extent, std::abs(out.xi1[k]), std::abs(out.xi2[k])});
    out.extent *= 1.2;
    if (out.extent == 0.0) out.extent = 1.0;
  }

  out.surface = RealGrid(grid_pts, grid_pts);
  RealGrid probe(trajectory.front().rows(), trajectory.front().cols());
  for (int a = 0; a < grid_pts; ++a) {
    const double x1 = -out.extent + 2.0 * out.extent * a / (grid_pts - 1);
    for (int b = 0; b < grid_pts; ++b) {
      const double x2 = -out.extent + 2.0 * out.extent * b / (grid_pts - 1);
      for (std::size_t i = 0; i < n; ++i)
        probe[i] = out.origin[i] + x1 * out.v1[i] + x2 * out.v2[i];
      out.surface(a, b) = std::exp(-reg.value(probe) / temperature);
    }
  }
  return out;
}

} // namespace ebmri
