#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ebmri/evaluation.hpp"
#include "ebmri/numerics.hpp"
#include "ebmri/recon.hpp"
#include "test_util.hpp"

using namespace ebmri;
using namespace ebmri::testing;

namespace {

/// Dense solve of (I + alpha D^T D) x = y under the dirichlet boundary; the
/// oracle for prox_coil_smooth.
RealGrid dense_smooth_solve(const RealGrid &y, double alpha) {
  const int R = y.rows(), C = y.cols();
  const std::size_t n = y.size();
  std::vector<std::vector<double>> A(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    RealGrid e(R, C, 0.0);
    e[j] = 1.0;
    const RealGrid le = grad_adjoint(grad(e, Boundary::dirichlet), Boundary::dirichlet);
    for (std::size_t i = 0; i < n; ++i) A[i][j] = alpha * le[i] + (i == j ? 1.0 : 0.0);
  }
  std::vector<double> b(y.data(), y.data() + n);
  const auto x = solve_dense(std::move(A), std::move(b));
  RealGrid out(R, C);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i];
  return out;
}

ReconProblem make_single_coil_problem(const RealGrid &image, const SamplingMask &mask,
                                      double noise_std, std::uint64_t seed) {
  const CoilSet coils = {ComplexGrid(image.rows(), image.cols(), cplx(1, 0))};
  const MeasuredData z = simulate_measurement(image, coils, mask, noise_std, seed);
  ReconProblem p;
  p.z = z;
  p.mask_dft = mask.dft_layout();
  return p;
}

} // namespace

TEST_CASE("prox_nonneg clips, keeps, and is idempotent") {
  RealGrid u(1, 2);
  u(0, 0) = -1;
  u(0, 1) = 2;
  const RealGrid p = prox_nonneg(u);
  CHECK(p(0, 0) == 0.0);
  CHECK(p(0, 1) == 2.0);
  CHECK(prox_nonneg(p) == p);
}

TEST_CASE("prox_coil_smooth") {
  Rng rng(1);

  SUBCASE("zero input maps to zero") {
    CoilSet y = {ComplexGrid(5, 5, cplx(0, 0))};
    const CoilSet p = prox_coil_smooth(y, 10.0, 0.1);
    CHECK(norm_sq(p) == 0.0);
  }

  SUBCASE("vanishing step approaches the identity") {
    CoilSet y = {random_complex(6, 6, rng)};
    const CoilSet p = prox_coil_smooth(y, 10.0, 1e-14);
    CHECK(max_rel_diff(p[0], y[0]) < 1e-9);
  }

  SUBCASE("matches the dense solve of (I + alpha D^T D) x = y on 5x5") {
    for (double alpha : {0.1, 1.0, 10.0}) {
      const ComplexGrid y = random_complex(5, 5, rng);
      const CoilSet p = prox_coil_smooth({y}, alpha, 1.0);
      RealGrid re(5, 5), im(5, 5);
      for (std::size_t i = 0; i < y.size(); ++i) {
        re[i] = y[i].real();
        im[i] = y[i].imag();
      }
      const RealGrid sre = dense_smooth_solve(re, alpha);
      const RealGrid sim = dense_smooth_solve(im, alpha);
      for (std::size_t i = 0; i < y.size(); ++i) {
        CHECK(std::abs(p[0][i].real() - sre[i]) < 1e-8);
        CHECK(std::abs(p[0][i].imag() - sim[i]) < 1e-8);
      }
    }
  }

  SUBCASE("exactly minimizes the prox objective against dithered candidates") {
    const ComplexGrid y = random_complex(6, 6, rng);
    const double mu = 10.0, step = 0.05;
    const CoilSet p = prox_coil_smooth({y}, mu, step);
    CoilSet dy = {y};
    axpy(dy, -1.0, p);
    const double obj = 0.5 * norm_sq(dy) + step * mu * coil_smoothness(p);
    for (int trial = 0; trial < 5; ++trial) {
      CoilSet q = p;
      for (std::size_t i = 0; i < q[0].size(); ++i)
        q[0][i] += cplx(0.01 * (rng.uniform() - 0.5), 0.01 * (rng.uniform() - 0.5));
      CoilSet dq = {y};
      axpy(dq, -1.0, q);
      const double obj_q = 0.5 * norm_sq(dq) + step * mu * coil_smoothness(q);
      CHECK(obj <= obj_q);
    }
  }
}

TEST_CASE("backtrack") {
  SUBCASE("quadratic with L0 above the curvature accepts immediately") {
    const RealGrid a(3, 3, 1.0);
    const RealGrid x0(3, 3, 0.0);
    const auto energy = [&](const RealGrid &x) {
      RealGrid d = x;
      axpy(d, -1.0, a);
      return 0.5 * norm_sq(d);
    };
    RealGrid g = x0;
    axpy(g, -1.0, a); // gradient at x0
    const double L0 = 2.0;
    const auto step = backtrack<RealGrid>(
        energy, energy(x0), g, [](const RealGrid &x, double) { return x; }, x0, L0, 0.9, 0.5, 60);
    CHECK(step.L == doctest::Approx(0.9 * L0));
    for (std::size_t i = 0; i < step.x.size(); ++i)
      CHECK(step.x[i] == doctest::Approx(x0[i] + (a[i] - x0[i]) / L0));
  }

  SUBCASE("returned x satisfies the tested descent inequality") {
    Rng rng(2);
    const RealGrid a = random_real(4, 4, rng);
    const RealGrid x0 = random_real(4, 4, rng);
    const auto energy = [&](const RealGrid &x) {
      RealGrid d = x;
      axpy(d, -1.0, a);
      return 0.5 * norm_sq(d);
    };
    RealGrid g = x0;
    axpy(g, -1.0, a);
    const auto step = backtrack<RealGrid>(
        energy, energy(x0), g, [](const RealGrid &x, double) { return prox_nonneg(x); }, x0, 0.01,
        0.9, 0.5, 60);
    CHECK(step.L > 0.0);
    CHECK(std::isfinite(step.L));
    const double L_accepted = step.L / 0.9;
    RealGrid d = step.x;
    axpy(d, -1.0, x0);
    CHECK(energy(step.x) <=
          energy(x0) + dot(g, d) + 0.5 * L_accepted * norm_sq(d) +
              1e-12 * (1.0 + std::abs(energy(x0))));
  }

  SUBCASE("an impossible target trips the trial cap") {
    const auto energy = [](const RealGrid &) { return std::numeric_limits<double>::infinity(); };
    const RealGrid x0(2, 2, 0.0);
    const RealGrid g(2, 2, 1.0);
    CHECK_THROWS_AS(backtrack<RealGrid>(
                        energy, 0.0, g, [](const RealGrid &x, double) { return x; }, x0, 1.0, 0.9,
                        0.5, 10),
                    std::runtime_error);
  }
}

TEST_CASE("ipalm exact recovery: lambda 0, full mask, noiseless, single coil") {
  const RealGrid x = shepp_logan(32, 32);
  MaskParams mp;
  mp.accel = 1.0;
  const SamplingMask mask = make_mask(MaskPattern::cartesian, 32, 32, mp, 0);
  ReconProblem p = make_single_coil_problem(x, mask, 0.0, 0);

  IpalmConfig cfg;
  cfg.iters = 50;
  cfg.lambda = 0.0;
  cfg.prior = ImagePrior::none();
  cfg.fix_coils = true;
  const ReconResult r = ipalm_solve(p, cfg);
  CHECK(psnr(r.u, x) > 100.0);
  CHECK(r.energy.back() <= r.energy.front() + 1e-12);
}

TEST_CASE("ipalm quadratic surrogate matches the normal-equations solution") {
  // Full mask, C = 1, sigma = 1, noisy data from a strictly positive image:
  // the unconstrained least-squares solution Re(F^* z) is positive, so the
  // nonnegativity prox is inactive and the minimizer has a closed form.
  Rng rng(3);
  const int n = 16;
  RealGrid x(n, n);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.4 + 0.4 * rng.uniform();
  MaskParams mp;
  mp.accel = 1.0;
  const SamplingMask mask = make_mask(MaskPattern::cartesian, n, n, mp, 0);
  ReconProblem p = make_single_coil_problem(x, mask, 0.02, 7);

  IpalmConfig cfg;
  cfg.iters = 100;
  cfg.lambda = 0.0;
  cfg.prior = ImagePrior::none();
  cfg.fix_coils = true;
  cfg.energy_tol = 0.0;
  const ReconResult r = ipalm_solve(p, cfg);

  const ComplexGrid img = dft2_oracle(p.z.planes[0], +1); // independent inverse DFT
  double max_err = 0;
  for (std::size_t i = 0; i < r.u.size(); ++i)
    max_err = std::max(max_err, std::abs(r.u[i] - img[i].real()));
  CHECK(max_err < 1e-6);
}

TEST_CASE("ipalm with TV on subsampled data decreases energy and stays nonnegative") {
  const RealGrid x = shepp_logan(32, 32);
  MaskParams mp;
  mp.accel = 3.0;
  mp.acl_fraction = 0.12;
  const SamplingMask mask = make_mask(MaskPattern::cartesian, 32, 32, mp, 2);
  const MeasuredData z = simulate_measurement(
      x, {ComplexGrid(32, 32, cplx(1, 0))}, mask, 0.01, 5);
  const ReconProblem p = normalize_problem(z, mask.dft_layout());

  IpalmConfig cfg;
  cfg.iters = 40;
  cfg.lambda = 0.05;
  cfg.prior = ImagePrior::make_tv();
  cfg.fix_coils = true;
  const ReconResult r = ipalm_solve(p, cfg);
  CHECK(r.energy.back() <= r.energy.front());
  for (std::size_t i = 0; i < r.u.size(); ++i) CHECK(r.u[i] >= 0.0);
}

TEST_CASE("joint ipalm on multi-coil data improves on the zero-filled start") {
  const int n = 48;
  const RealGrid x = shepp_logan(n, n);
  const CoilSet coils = smooth_coils(n, n, 3, 17).coils;
  MaskParams mp;
  mp.accel = 3.0;
  mp.acl_fraction = 0.1;
  const SamplingMask mask = make_mask(MaskPattern::cartesian, n, n, mp, 4);
  const MeasuredData z = simulate_measurement(x, coils, mask, 0.005, 6);
  const ReconProblem p = normalize_problem(z, mask.dft_layout());

  RealGrid ref(n, n); // reference in the re-weighted variable
  const RealGrid rho = rss(coils);
  for (std::size_t i = 0; i < ref.size(); ++i) ref[i] = x[i] * rho[i];

  const auto [u0, s0] = zf_rss_init(p.z, p.mask_dft);
  const double psnr_zf = psnr(denormalize(u0, p.scale), ref);

  IpalmConfig cfg;
  cfg.iters = 60;
  cfg.lambda = 0.02;
  cfg.mu = 10.0;
  cfg.prior = ImagePrior::make_tv();
  const ReconResult r = ipalm_solve(p, cfg);
  const double psnr_map = psnr(denormalize(r.u, p.scale), ref);

  CHECK(r.energy.back() <= r.energy.front());
  CHECK(psnr_map > psnr_zf + 1.0);
}

TEST_CASE("normalize_problem") {
  Rng rng(5);
  const int n = 8;
  MaskParams mp;
  mp.accel = 2.0;
  const SamplingMask mask = make_mask(MaskPattern::random, n, n, mp, 3);
  const RealGrid mdft = mask.dft_layout();
  MeasuredData z;
  z.planes = {random_complex(n, n, rng)};
  for (std::size_t i = 0; i < z.planes[0].size(); ++i) z.planes[0][i] *= mdft[i];

  SUBCASE("scale equals the max of the zero-filled image") {
    const ReconProblem p = normalize_problem(z, mdft);
    const auto [u0, s0] = zf_rss_init(z, mdft);
    CHECK(p.scale == max_abs(u0));
  }

  SUBCASE("doubling the data doubles the scale and fixes the normalized problem") {
    const ReconProblem p1 = normalize_problem(z, mdft);
    MeasuredData z2 = z;
    for (auto &plane : z2.planes)
      for (std::size_t i = 0; i < plane.size(); ++i) plane[i] *= 2.0;
    const ReconProblem p2 = normalize_problem(z2, mdft);
    CHECK(p2.scale == doctest::Approx(2.0 * p1.scale).epsilon(1e-14));
    CHECK(max_rel_diff(p2.z.planes[0], p1.z.planes[0]) < 1e-14);
  }

  SUBCASE("round trip: reconstruction commutes with normalization at lambda 0") {
    IpalmConfig cfg;
    cfg.iters = 25;
    cfg.lambda = 0.0;
    cfg.prior = ImagePrior::none();
    cfg.fix_coils = true;
    cfg.energy_tol = 0.0;

    ReconProblem raw;
    raw.z = z;
    raw.mask_dft = mdft;
    const ReconResult direct = ipalm_solve(raw, cfg);

    const ReconProblem norm = normalize_problem(z, mdft);
    const ReconResult scaled = ipalm_solve(norm, cfg);
    const RealGrid back = denormalize(scaled.u, norm.scale);
    CHECK(max_rel_diff(back, direct.u) < 1e-12);
  }

  SUBCASE("all-zero data is rejected") {
    MeasuredData z0;
    z0.planes = {ComplexGrid(n, n, cplx(0, 0))};
    CHECK_THROWS_AS(normalize_problem(z0, mdft), std::invalid_argument);
  }
}

TEST_CASE("posterior sampling bookkeeping") {
  const RealGrid x = shepp_logan(8, 8);
  MaskParams mp;
  mp.accel = 1.0;
  const SamplingMask mask = make_mask(MaskPattern::cartesian, 8, 8, mp, 0);
  ReconProblem p = make_single_coil_problem(x, mask, 0.0, 0);
  const CoilSet ones = {ComplexGrid(8, 8, cplx(1, 0))};

  SUBCASE("thin 1, no burn-in, 10 iterations yields exactly 10 samples") {
    PosteriorConfig cfg;
    cfg.burn_in = 0;
    cfg.thin = 1;
    cfg.total_iters = 10;
    cfg.lambda = 0.0;
    cfg.prior = ImagePrior::none();
    cfg.zeta = 0.5;
    long n = 0;
    const long kept = posterior_sample(p, ones, cfg, [&](const RealGrid &) { ++n; });
    CHECK(kept == 10);
    CHECK(n == 10);
  }

  SUBCASE("burn-in and thinning arithmetic") {
    PosteriorConfig cfg;
    cfg.burn_in = 100;
    cfg.thin = 7;
    cfg.total_iters = 170;
    cfg.lambda = 0.0;
    cfg.prior = ImagePrior::none();
    cfg.zeta = 0.5;
    CHECK(posterior_collect(p, ones, cfg).size() == 10); // (170-100)/7
  }

  SUBCASE("identical seeds give identical sample streams") {
    PosteriorConfig cfg;
    cfg.burn_in = 5;
    cfg.thin = 3;
    cfg.total_iters = 35;
    cfg.lambda = 0.0;
    cfg.prior = ImagePrior::none();
    cfg.zeta = 0.5;
    cfg.seed = 11;
    const auto a = posterior_collect(p, ones, cfg);
    const auto b = posterior_collect(p, ones, cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
}

TEST_CASE("posterior mean approaches the conjugate-Gaussian solution") {
  // Full mask, sigma = 1, lambda = 0: the Gibbs density of the data term is
  // N(Re(F^* z), Id), so the chain mean must land on Re(F^* z).
  Rng rng(6);
  const int n = 8;
  MaskParams mp;
  mp.accel = 1.0;
  const SamplingMask mask = make_mask(MaskPattern::cartesian, n, n, mp, 0);
  const RealGrid x = shepp_logan(n, n);
  ReconProblem p = make_single_coil_problem(x, mask, 0.05, 9);
  const CoilSet ones = {ComplexGrid(n, n, cplx(1, 0))};

  PosteriorConfig cfg;
  cfg.burn_in = 200;
  cfg.thin = 2;
  cfg.total_iters = 200 + 2 * 20000;
  cfg.lambda = 0.0;
  cfg.prior = ImagePrior::none();
  cfg.zeta = 1.0; // AR(1) factor 0.5 per mode: fast mixing
  cfg.seed = 13;

  StreamingMoments acc;
  posterior_sample(p, ones, cfg, [&](const RealGrid &s) { acc.push(s); });
  const RealGrid mean_hat = acc.mean();

  const ComplexGrid img = ifft2(p.z.planes[0]);
  // stationary variance 1/(1 - zeta/4), consecutive kept-sample correlation
  // 0.25; z-test on the spatial average at three standard errors
  const double var_st = 1.0 / (1.0 - cfg.zeta / 4.0);
  const double rho1 = 0.25;
  const double n_kept = 20000.0;
  const double se_pix = std::sqrt(var_st * (1 + rho1) / (1 - rho1) / n_kept);
  const double se_avg = se_pix / std::sqrt(static_cast<double>(x.size()));
  double avg_dev = 0;
  for (std::size_t i = 0; i < mean_hat.size(); ++i) avg_dev += mean_hat[i] - img[i].real();
  avg_dev /= static_cast<double>(mean_hat.size());
  CHECK(std::abs(avg_dev) < 3.0 * se_avg);

  const RealGrid var_hat = acc.variance();
  for (std::size_t i = 0; i < var_hat.size(); ++i) CHECK(var_hat[i] >= 0.0);
}

TEST_CASE("posterior mmse converges to the ground truth at vanishing noise") {
  // Full sampling and noise 1e-4: the posterior mean is the ground truth up
  // to the noise, and averaging enough near-independent samples pushes the
  // Monte Carlo error below 60 dB PSNR.
  const int n = 16;
  const RealGrid x = shepp_logan(n, n);
  MaskParams mp;
  mp.accel = 1.0;
  const SamplingMask mask = make_mask(MaskPattern::cartesian, n, n, mp, 0);
  ReconProblem p = make_single_coil_problem(x, mask, 1e-4, 3);
  const CoilSet ones = {ComplexGrid(n, n, cplx(1, 0))};

  PosteriorConfig cfg;
  cfg.burn_in = 500;
  cfg.thin = 1;
  cfg.total_iters = 500 + 6000000;
  cfg.lambda = 0.0;
  cfg.prior = ImagePrior::none();
  cfg.zeta = 1.8;
  cfg.seed = 21;

  StreamingMoments acc;
  posterior_sample(p, ones, cfg, [&](const RealGrid &s) { acc.push(s); });
  CHECK(psnr(acc.mean(), x) > 60.0);
}

TEST_CASE("mmse_and_variance") {
  Rng rng(7);

  SUBCASE("identical samples have zero variance") {
    const RealGrid s = random_real(4, 4, rng);
    const auto [mean, var] = mmse_and_variance({s, s, s});
    CHECK(mean == s);
    CHECK(norm_sq(var) == 0.0);
  }

  SUBCASE("two samples: mean (a+b)/2, variance ((a-b)/2)^2") {
    const RealGrid a = random_real(3, 3, rng), b = random_real(3, 3, rng);
    const auto [mean, var] = mmse_and_variance({a, b});
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(mean[i] == doctest::Approx(0.5 * (a[i] + b[i])).epsilon(1e-14));
      const double d = 0.5 * (a[i] - b[i]);
      CHECK(var[i] == doctest::Approx(d * d).epsilon(1e-12));
    }
  }

  SUBCASE("streaming accumulator matches the two-pass computation") {
    std::vector<RealGrid> samples;
    StreamingMoments acc;
    for (int i = 0; i < 50; ++i) {
      samples.push_back(random_real(5, 5, rng));
      acc.push(samples.back());
    }
    const auto [mean, var] = mmse_and_variance(samples);
    CHECK(max_rel_diff(acc.mean(), mean) < 1e-12);
    CHECK(max_rel_diff(acc.variance(), var) < 1e-12);
    CHECK_THROWS_AS(mmse_and_variance({samples[0]}), std::invalid_argument);
  }
}
