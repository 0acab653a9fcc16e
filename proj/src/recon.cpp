#include "ebmri/recon.hpp"

#include "ebmri/ebm_training.hpp"
#include "ebmri/numerics.hpp"
#include "ebmri/rng.hpp"

#include <chrono>
#include <cmath>

namespace ebmri {

// ---- ImagePrior ----

double ImagePrior::value(const RealGrid &u) const {
  switch (kind) {
    case RegKind::none: return 0.0;
    case RegKind::tv: return tv_value(u, tv);
    case RegKind::ebm: return ebm_value(u, *ebm_theta, ebm_arch);
  }
  return 0.0;
}

RealGrid ImagePrior::grad(const RealGrid &u) const {
  switch (kind) {
    case RegKind::none: return RealGrid(u.rows(), u.cols(), 0.0);
    case RegKind::tv: return tv_grad(u, tv);
    case RegKind::ebm: return ebm_grad_input(u, *ebm_theta, ebm_arch);
  }
  return RealGrid(u.rows(), u.cols(), 0.0);
}

ImagePrior ImagePrior::none() { return {}; }

ImagePrior ImagePrior::make_tv(TvConfig cfg) {
  ImagePrior p;
  p.kind = RegKind::tv;
  p.tv = cfg;
  return p;
}

ImagePrior ImagePrior::make_ebm(EbmArchitecture arch, std::shared_ptr<const EbmParameters> theta) {
  ImagePrior p;
  p.kind = RegKind::ebm;
  p.ebm_arch = arch;
  p.ebm_theta = std::move(theta);
  return p;
}

// ---- normalization ----

ReconProblem normalize_problem(const MeasuredData &z, const RealGrid &mask_dft) {
  auto [u0, sigma0] = zf_rss_init(z, mask_dft);
  const double scale = max_abs(u0);
  if (scale == 0.0) throw std::invalid_argument("cannot normalize all-zero data");
  ReconProblem p;
  p.z = z;
  for (auto &plane : p.z.planes)
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] /= scale;
  p.z.noise_std = z.noise_std / scale;
  p.mask_dft = mask_dft;
  p.scale = scale;
  return p;
}

RealGrid denormalize(const RealGrid &u, double s) {
  RealGrid out = u;
  scale(out, s);
  return out;
}

// ---- prox operators ----

RealGrid prox_nonneg(const RealGrid &u) {
  RealGrid out = u;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], 0.0);
  return out;
}

namespace {

RealGrid dst_filter(const RealGrid &y, const RealGrid &xi, double alpha) {
  RealGrid k = dst2(y);
  for (std::size_t i = 0; i < k.size(); ++i) k[i] /= 1.0 + alpha * xi[i];
  return dst2_inv(k);
}

} // namespace

CoilSet prox_coil_smooth(const CoilSet &coils, double mu, double step) {
  if (mu <= 0.0) throw std::invalid_argument("mu must be positive");
  if (coils.empty()) throw std::invalid_argument("empty coil set");
  // (I + alpha D^T D)^-1 applied per component; in the DST eigenbasis the
  // filter is 1/(1 + alpha xi), the same map as diag(xi + mu^)^-1 (mu^ y)
  // with mu^ = 1/alpha.
  const double alpha = step * mu;
  const int R = coils.front().rows(), C = coils.front().cols();
  const RealGrid xi = laplace_eigenvalues(R, C);
  CoilSet out;
  out.reserve(coils.size());
  for (const auto &coil : coils) {
    RealGrid re(R, C), im(R, C);
    for (std::size_t i = 0; i < coil.size(); ++i) {
      re[i] = coil[i].real();
      im[i] = coil[i].imag();
    }
    const RealGrid fre = dst_filter(re, xi, alpha);
    const RealGrid fim = dst_filter(im, xi, alpha);
    ComplexGrid c(R, C);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = cplx(fre[i], fim[i]);
    out.push_back(std::move(c));
  }
  return out;
}

double coil_smoothness(const CoilSet &coils) {
  double s = 0;
  for (const auto &coil : coils) {
    RealGrid re(coil.rows(), coil.cols()), im(coil.rows(), coil.cols());
    for (std::size_t i = 0; i < coil.size(); ++i) {
      re[i] = coil[i].real();
      im[i] = coil[i].imag();
    }
    const GradientField fre = grad(re, Boundary::dirichlet);
    const GradientField fim = grad(im, Boundary::dirichlet);
    s += norm_sq(fre.dx) + norm_sq(fre.dy) + norm_sq(fim.dx) + norm_sq(fim.dy);
  }
  return 0.5 * s;
}

// ---- backtracking ----

namespace {

template <typename Vec>
Vec take_step(const Vec &x0, const Vec &g, double inv_L);

template <>
RealGrid take_step(const RealGrid &x0, const RealGrid &g, double inv_L) {
  RealGrid x = x0;
  axpy(x, -inv_L, g);
  return x;
}

template <>
CoilSet take_step(const CoilSet &x0, const CoilSet &g, double inv_L) {
  CoilSet x = x0;
  axpy(x, -inv_L, g);
  return x;
}

template <typename Vec>
double diff_inner(const Vec &a, const Vec &b, const Vec &g) {
  // <g, a - b> over the real inner product
  Vec d = a;
  axpy(d, -1.0, b);
  if constexpr (std::is_same_v<Vec, RealGrid>)
    return dot(g, d);
  else
    return dot_real(g, d);
}

template <typename Vec>
double diff_norm_sq(const Vec &a, const Vec &b) {
  Vec d = a;
  axpy(d, -1.0, b);
  return norm_sq(d);
}

} // namespace

template <typename Vec>
ProxGradStep<Vec> backtrack(const std::function<double(const Vec &)> &energy, double energy_at_x0,
                            const Vec &grad_at_x0,
                            const std::function<Vec(const Vec &, double)> &prox, const Vec &x0,
                            double L0, double gamma1, double gamma2, int cap) {
  if (L0 <= 0.0) throw std::invalid_argument("initial Lipschitz estimate must be positive");
  double L = L0;
  for (int trial = 0; trial <= cap; ++trial) {
    const double inv_L = 1.0 / L;
    Vec x = prox(take_step(x0, grad_at_x0, inv_L), inv_L);
    const double e = energy(x);
    const double lin = diff_inner(x, x0, grad_at_x0);
    const double quad = 0.5 * L * diff_norm_sq(x, x0);
    // tiny relative slack absorbs roundoff when the step is at stationarity
    const double bound = energy_at_x0 + lin + quad + 1e-12 * (1.0 + std::abs(energy_at_x0));
    if (std::isfinite(e) && e <= bound) return {std::move(x), gamma1 * L};
    L /= gamma2;
  }
  throw std::runtime_error("backtracking exceeded " + std::to_string(cap) +
                           " trials (L reached " + std::to_string(L) + ")");
}

template ProxGradStep<RealGrid> backtrack(const std::function<double(const RealGrid &)> &, double,
                                          const RealGrid &,
                                          const std::function<RealGrid(const RealGrid &, double)> &,
                                          const RealGrid &, double, double, double, int);
template ProxGradStep<CoilSet> backtrack(const std::function<double(const CoilSet &)> &, double,
                                         const CoilSet &,
                                         const std::function<CoilSet(const CoilSet &, double)> &,
                                         const CoilSet &, double, double, double, int);

// ---- iPALM ----

namespace {

CoilSet ones_coils(int rows, int cols) {
  return {ComplexGrid(rows, cols, cplx(1.0, 0.0))};
}

template <typename Vec>
Vec inertial_point(const Vec &cur, const Vec &prev, double w) {
  Vec bar = cur;
  axpy(bar, w, cur);
  axpy(bar, -w, prev);
  return bar;
}

} // namespace

ReconResult ipalm_solve(const ReconProblem &problem, const IpalmConfig &cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  const RealGrid &mask = problem.mask_dft;
  const int R = mask.rows(), C = mask.cols();

  RealGrid u(R, C, 0.0);
  CoilSet sigma;
  if (cfg.fix_coils) {
    if (problem.z.planes.size() != 1)
      throw std::invalid_argument("fixed-coil mode expects single-coil data");
    auto [u0, s0] = zf_rss_init(problem.z, mask);
    u = std::move(u0);
    sigma = ones_coils(R, C);
  } else {
    auto [u0, s0] = zf_rss_init(problem.z, mask);
    u = std::move(u0);
    sigma = std::move(s0);
  }
  u = prox_nonneg(u);

  const auto total_energy = [&](const RealGrid &uu, const CoilSet &ss) {
    double e = data_term(uu, ss, problem.z, mask) + cfg.lambda * cfg.prior.value(uu);
    if (!cfg.fix_coils) e += cfg.mu * coil_smoothness(ss);
    return e;
  };

  ReconResult res;
  res.energy.push_back(total_energy(u, sigma));
  if (!std::isfinite(res.energy.front())) throw DivergenceError("non-finite initial energy");

  double L_u = cfg.init_L_u;
  double L_sigma = cfg.init_L_sigma;
  RealGrid u_prev = u;
  CoilSet sigma_prev = sigma;

  for (int k = 1; k < cfg.iters; ++k) {
    const double w = static_cast<double>(k) / (k + 3);

    // image block
    {
      const RealGrid u_bar = inertial_point(u, u_prev, w);
      const auto energy = [&](const RealGrid &v) {
        return data_term(v, sigma, problem.z, mask) + cfg.lambda * cfg.prior.value(v);
      };
      RealGrid g = grad_u_data(u_bar, sigma, problem.z, mask);
      if (cfg.prior.kind != RegKind::none) axpy(g, cfg.lambda, cfg.prior.grad(u_bar));
      auto step = backtrack<RealGrid>(
          energy, energy(u_bar), g, [](const RealGrid &v, double) { return prox_nonneg(v); },
          u_bar, L_u, cfg.gamma1, cfg.gamma2, cfg.max_backtracks);
      u_prev = std::move(u);
      u = std::move(step.x);
      L_u = step.L;
      res.L_u_trace.push_back(L_u);
    }

    // sensitivity block
    if (!cfg.fix_coils) {
      const CoilSet sigma_bar = inertial_point(sigma, sigma_prev, w);
      const auto energy = [&](const CoilSet &ss) { return data_term(u, ss, problem.z, mask); };
      const CoilSet g = grad_sigma_data(u, sigma_bar, problem.z, mask);
      auto step = backtrack<CoilSet>(
          energy, energy(sigma_bar), g,
          [&](const CoilSet &ss, double inv_L) { return prox_coil_smooth(ss, cfg.mu, inv_L); },
          sigma_bar, L_sigma, cfg.gamma1, cfg.gamma2, cfg.max_backtracks);
      sigma_prev = std::move(sigma);
      sigma = std::move(step.x);
      L_sigma = step.L;
      res.L_sigma_trace.push_back(L_sigma);
    }

    const double e = total_energy(u, sigma);
    if (!std::isfinite(e)) throw DivergenceError("non-finite energy at iteration " +
                                                 std::to_string(k));
    res.energy.push_back(e);
    res.iters_run = k;

    if (cfg.energy_tol > 0.0 && res.energy.size() >= 2) {
      const double prev = res.energy[res.energy.size() - 2];
      if (std::abs(prev - e) <= cfg.energy_tol * std::max(1.0, std::abs(prev))) break;
    }
  }

  res.u = std::move(u);
  res.coils = std::move(sigma);
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

// ---- posterior sampling ----

long posterior_sample(const ReconProblem &problem, const CoilSet &coils_fixed,
                      const PosteriorConfig &cfg,
                      const std::function<void(const RealGrid &)> &sink) {
  if (cfg.total_iters <= cfg.burn_in)
    throw std::invalid_argument("total_iters must exceed burn_in");
  if (cfg.thin < 1) throw std::invalid_argument("thin must be >= 1");

  const RealGrid &mask = problem.mask_dft;
  Rng rng(cfg.seed);
  RealGrid x(mask.rows(), mask.cols());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();

  const double noise = std::sqrt(cfg.zeta);
  long kept = 0;
  for (long t = 1; t <= cfg.total_iters; ++t) {
    RealGrid g = grad_u_data(x, coils_fixed, problem.z, mask);
    if (cfg.prior.kind != RegKind::none) axpy(g, cfg.lambda, cfg.prior.grad(x));
    if (!all_finite(g))
      throw DivergenceError("non-finite posterior gradient at iteration " + std::to_string(t));
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] += -0.5 * cfg.zeta * g[i] + noise * rng.normal();
    if (t > cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0) {
      sink(x);
      ++kept;
    }
  }
  return kept;
}

std::vector<RealGrid> posterior_collect(const ReconProblem &problem, const CoilSet &coils_fixed,
                                        const PosteriorConfig &cfg) {
  std::vector<RealGrid> samples;
  posterior_sample(problem, coils_fixed, cfg,
                   [&](const RealGrid &s) { samples.push_back(s); });
  return samples;
}

std::pair<RealGrid, RealGrid> mmse_and_variance(const std::vector<RealGrid> &samples) {
  if (samples.size() < 2) throw std::invalid_argument("need at least two samples");
  RealGrid mean(samples.front().rows(), samples.front().cols(), 0.0);
  for (const auto &s : samples) axpy(mean, 1.0, s);
  scale(mean, 1.0 / static_cast<double>(samples.size()));
  RealGrid var(mean.rows(), mean.cols(), 0.0);
  for (const auto &s : samples)
    for (std::size_t i = 0; i < var.size(); ++i) {
      const double d = s[i] - mean[i];
      var[i] += d * d;
    }
  scale(var, 1.0 / static_cast<double>(samples.size()));
  return {std::move(mean), std::move(var)};
}

void StreamingMoments::push(const RealGrid &sample) {
  if (n_ == 0) {
    mean_ = sample;
    m2_ = RealGrid(sample.rows(), sample.cols(), 0.0);
    n_ = 1;
    return;
  }
  ++n_;
  for (std::size_t i = 0; i < mean_.size(); ++i) {
    const double d = sample[i] - mean_[i];
    mean_[i] += d / static_cast<double>(n_);
    m2_[i] += d * (sample[i] - mean_[i]);
  }
}

RealGrid StreamingMoments::mean() const {
  if (n_ == 0) throw std::logic_error("no samples accumulated");
  return mean_;
}

RealGrid StreamingMoments::variance() const {
  if (n_ < 2) throw std::logic_error("need at least two samples");
  RealGrid v = m2_;
  scale(v, 1.0 / static_cast<double>(n_));
  return v;
}

} // namespace ebmri
