#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ebmri/evaluation.hpp"
#include "ebmri/numerics.hpp"
#include "test_util.hpp"

using namespace ebmri;
using namespace ebmri::testing;

namespace {

// Textbook two-pass SSIM over explicit 7x7 windows; the oracle for ssim().
double ssim_oracle(const RealGrid &x, const RealGrid &ref) {
  double lo = ref[0], hi = ref[0];
  for (std::size_t i = 0; i < ref.size(); ++i) {
    lo = std::min(lo, ref[i]);
    hi = std::max(hi, ref[i]);
  }
  const double L = hi - lo;
  const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
  double acc = 0;
  long count = 0;
  for (int r = 0; r + 7 <= x.rows(); ++r)
    for (int c = 0; c + 7 <= x.cols(); ++c) {
      std::vector<double> a, b;
      for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 7; ++j) {
          a.push_back(x(r + i, c + j));
          b.push_back(ref(r + i, c + j));
        }
      double ma = 0, mb = 0;
      for (int k = 0; k < 49; ++k) {
        ma += a[k];
        mb += b[k];
      }
      ma /= 49;
      mb /= 49;
      double va = 0, vb = 0, cov = 0;
      for (int k = 0; k < 49; ++k) {
        va += (a[k] - ma) * (a[k] - ma);
        vb += (b[k] - mb) * (b[k] - mb);
        cov += (a[k] - ma) * (b[k] - mb);
      }
      va /= 49;
      vb /= 49;
      cov /= 49;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return acc / count;
}

// Continuous piecewise-linear least squares on the same 5 knots (hat basis);
// the comparison oracle for the cubic spline fit.
double linear_fit_residual(const std::vector<double> &xs, const std::vector<double> &ys) {
  double lo = xs[0], hi = xs[0];
  for (double v : xs) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<double> knots(5);
  for (int i = 0; i < 5; ++i) knots[i] = lo + (hi - lo) * i / 4.0;
  const auto hat = [&](int i, double x) {
    const double dl = i == 0 ? 1.0 : knots[i] - knots[i - 1];
    const double dr = i == 4 ? 1.0 : knots[i + 1] - knots[i];
    if (i > 0 && x >= knots[i - 1] && x <= knots[i]) return (x - knots[i - 1]) / dl;
    if (i < 4 && x >= knots[i] && x <= knots[i + 1]) return (knots[i + 1] - x) / dr;
    if (i == 0 && x <= knots[0]) return 1.0;
    if (i == 4 && x >= knots[4]) return 1.0;
    return 0.0;
  };
  std::vector<std::vector<double>> ata(5, std::vector<double>(5, 0.0));
  std::vector<double> atb(5, 0.0);
  for (std::size_t p = 0; p < xs.size(); ++p)
    for (int i = 0; i < 5; ++i) {
      atb[i] += hat(i, xs[p]) * ys[p];
      for (int j = 0; j < 5; ++j) ata[i][j] += hat(i, xs[p]) * hat(j, xs[p]);
    }
  for (int i = 0; i < 5; ++i) ata[i][i] += 1e-12;
  const auto c = solve_dense(std::move(ata), std::move(atb));
  double res = 0;
  for (std::size_t p = 0; p < xs.size(); ++p) {
    double f = 0;
    for (int i = 0; i < 5; ++i) f += c[i] * hat(i, xs[p]);
    res += (ys[p] - f) * (ys[p] - f);
  }
  return res;
}

} // namespace

TEST_CASE("psnr and nmse on known pairs") {
  const RealGrid ref(4, 4, 1.0);

  SUBCASE("identical pair: nmse 0, psnr capped sentinel") {
    CHECK(nmse(ref, ref) == 0.0);
    CHECK(std::isinf(psnr(ref, ref)));
    CHECK(psnr_capped(ref, ref) == 300.0);
  }
  SUBCASE("zero estimate: nmse 1") { CHECK(nmse(RealGrid(4, 4, 0.0), ref) == 1.0); }
  SUBCASE("uniform +0.1 offset: mse 0.01, psnr 20 dB") {
    const RealGrid x(4, 4, 1.1);
    CHECK(psnr(x, ref) == doctest::Approx(20.0).epsilon(1e-10));
    CHECK(nmse(x, ref) == doctest::Approx(0.01).epsilon(1e-12));
  }
  SUBCASE("shape mismatch is rejected") {
    CHECK_THROWS_AS(nmse(RealGrid(2, 2), ref), std::invalid_argument);
  }
}

TEST_CASE("ssim") {
  Rng rng(1);

  SUBCASE("identical images score exactly one") {
    const RealGrid x = random_real(10, 10, rng, 0.0, 1.0);
    CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("a constant shift is penalized through the luminance term only") {
    const RealGrid ref = random_real(12, 12, rng, 0.0, 1.0);
    RealGrid shifted = ref;
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += 0.2;
    const double s = ssim(shifted, ref);
    CHECK(s < 1.0);
    CHECK(s > 0.0);
  }

  SUBCASE("matches the per-window scalar oracle") {
    const RealGrid ref = random_real(16, 16, rng, 0.0, 1.0);
    RealGrid x = ref;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += 0.05 * (rng.uniform() - 0.5);
    CHECK(rel_err(ssim(x, ref), ssim_oracle(x, ref)) < 1e-10);
  }

  SUBCASE("too-small inputs are rejected") {
    CHECK_THROWS_AS(ssim(RealGrid(5, 5), RealGrid(5, 5)), std::invalid_argument);
  }
}

TEST_CASE("null_space_residual") {
  const int n = 24;
  const RealGrid x = shepp_logan(n, n);

  SUBCASE("exact sensitivities and noiseless data leave no residual") {
    const CoilSet coils = smooth_coils(n, n, 4, 5).coils;
    MaskParams mp;
    mp.accel = 1.0;
    const SamplingMask full = make_mask(MaskPattern::cartesian, n, n, mp, 0);
    const MeasuredData z = simulate_measurement(x, coils, full, 0.0, 0);
    const NullSpaceResidual r = null_space_residual(coils, z.planes);
    CHECK(r.norm < 1e-10);
  }

  SUBCASE("a single arbitrary nonzero coil is always consistent") {
    Rng rng(2);
    ComplexGrid sigma = random_complex(n, n, rng);
    for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] += cplx(2.0, 0.0);
    ComplexGrid img(n, n);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = sigma[i] * x[i];
    const CoilSet kspace = {fft2(img)};
    const NullSpaceResidual r = null_space_residual({sigma}, kspace);
    CHECK(r.norm < 1e-10);
  }

  SUBCASE("residual grows monotonically with sensitivity perturbations") {
    const CoilSet coils = smooth_coils(n, n, 3, 7).coils;
    MaskParams mp;
    mp.accel = 1.0;
    const SamplingMask full = make_mask(MaskPattern::cartesian, n, n, mp, 0);
    const MeasuredData z = simulate_measurement(x, coils, full, 0.0, 0);

    Rng rng(3);
    CoilSet bump;
    for (int c = 0; c < 3; ++c) bump.push_back(random_complex(n, n, rng));

    double prev = 0;
    for (double eps : {0.01, 0.05, 0.2}) {
      CoilSet perturbed = coils;
      axpy(perturbed, eps, bump);
      const double nr = null_space_residual(perturbed, z.planes).norm;
      CHECK(nr > prev);
      prev = nr;
    }
  }
}

TEST_CASE("spline calibration") {
  SUBCASE("identity scatter fits the identity on the data range") {
    std::vector<double> xs, ys;
    for (int i = 0; i <= 200; ++i) {
      xs.push_back(i / 200.0);
      ys.push_back(i / 200.0);
    }
    const SplineCalibration s = spline_fit(xs, ys);
    double res = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double d = spline_apply(s, xs[i]) - ys[i];
      res += d * d;
    }
    CHECK(res < 1e-8);
  }

  SUBCASE("affine scatter is reproduced exactly") {
    std::vector<double> xs, ys;
    for (int i = 0; i <= 100; ++i) {
      const double x = -1.0 + 0.03 * i;
      xs.push_back(x);
      ys.push_back(2.0 * x + 1.0);
    }
    const SplineCalibration s = spline_fit(xs, ys);
    for (double x : {-0.9, -0.3, 0.4, 1.3, 1.9})
      CHECK(spline_apply(s, x) == doctest::Approx(2.0 * x + 1.0).epsilon(1e-7));
  }

  SUBCASE("beats the 5-knot piecewise-linear fit on a smooth monotone map") {
    Rng rng(4);
    std::vector<double> xs, ys;
    for (int i = 0; i < 10000; ++i) {
      const double x = rng.uniform();
      xs.push_back(x);
      ys.push_back(std::tanh(2.5 * x) + 0.3 * x * x);
    }
    const SplineCalibration s = spline_fit(xs, ys);
    double res = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double d = spline_apply(s, xs[i]) - ys[i];
      res += d * d;
    }
    CHECK(res < linear_fit_residual(xs, ys));
  }

  SUBCASE("fit residual never exceeds the best constant map") {
    Rng rng(5);
    std::vector<double> xs, ys;
    for (int i = 0; i < 500; ++i) {
      xs.push_back(rng.uniform());
      ys.push_back(rng.uniform());
    }
    const SplineCalibration s = spline_fit(xs, ys);
    double mean = 0;
    for (double y : ys) mean += y;
    mean /= static_cast<double>(ys.size());
    double res = 0, res_const = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double d = spline_apply(s, xs[i]) - ys[i];
      res += d * d;
      res_const += (ys[i] - mean) * (ys[i] - mean);
    }
    CHECK(res <= res_const + 1e-9);
  }

  SUBCASE("degenerate abscissae are rejected") {
    CHECK_THROWS_AS(spline_fit({1, 1, 1, 1, 1}, {1, 2, 3, 4, 5}), std::invalid_argument);
    CHECK_THROWS_AS(spline_fit({1, 2, 3}, {1, 2, 3}), std::invalid_argument);
  }

  SUBCASE("the fitted curve is C2: value, slope and curvature agree across knots") {
    Rng rng(6);
    std::vector<double> xs, ys;
    for (int i = 0; i < 2000; ++i) {
      const double x = rng.uniform();
      xs.push_back(x);
      ys.push_back(std::sin(3 * x) + 0.2 * rng.uniform());
    }
    const SplineCalibration s = spline_fit(xs, ys);
    // One-sided slope and curvature estimates straddling each interior knot
    // must agree up to finite-difference truncation.
    const double h = 1e-5;
    for (std::size_t k = 1; k + 1 < s.knots.size(); ++k) {
      const double t = s.knots[k];
      const double dl = (spline_apply(s, t) - spline_apply(s, t - h)) / h;     // f'(t - h/2)
      const double dr = (spline_apply(s, t + h) - spline_apply(s, t)) / h;     // f'(t + h/2)
      CHECK(std::abs(dl - dr) < 1e-3 * std::max(1.0, std::abs(dl)));
      const double cl =
          (spline_apply(s, t - 2 * h) - 2 * spline_apply(s, t - h) + spline_apply(s, t)) / (h * h);
      const double cr =
          (spline_apply(s, t) - 2 * spline_apply(s, t + h) + spline_apply(s, t + 2 * h)) / (h * h);
      CHECK(std::abs(cl - cr) < 1e-2 * std::max(1.0, std::abs(cl)));
    }
  }
}

TEST_CASE("lambda regression") {
  SUBCASE("two points are interpolated exactly") {
    const LambdaFit f = lambda_fit({1.0, 3.0}, {0.2, 0.8});
    CHECK(f.slope == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(f.intercept == doctest::Approx(-0.1).epsilon(1e-12));
  }

  SUBCASE("constant optimal lambda gives slope zero") {
    const LambdaFit f = lambda_fit({1.0, 2.0, 5.0}, {0.7, 0.7, 0.7});
    CHECK(f.slope == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(f.intercept == doctest::Approx(0.7).epsilon(1e-12));
  }

  SUBCASE("noisy linear relation is recovered within three standard errors") {
    Rng rng(7);
    const double slope = 0.45, intercept = 0.1, noise = 0.05;
    std::vector<double> xs, ys;
    for (int i = 0; i < 200; ++i) {
      const double x = 2.0 * rng.uniform();
      xs.push_back(x);
      ys.push_back(slope * x + intercept + noise * rng.normal());
    }
    const LambdaFit f = lambda_fit(xs, ys);
    double mx = 0;
    for (double x : xs) mx += x;
    mx /= xs.size();
    double sxx = 0;
    for (double x : xs) sxx += (x - mx) * (x - mx);
    const double se_slope = noise / std::sqrt(sxx);
    CHECK(std::abs(f.slope - slope) < 3.0 * se_slope);
  }

  SUBCASE("prediction is clamped positive") {
    const LambdaFit f{-1.0, 0.0};
    CHECK(lambda_predict(f, 5.0) > 0.0);
  }

  SUBCASE("fewer than two points is an error") {
    CHECK_THROWS_AS(lambda_fit({1.0}, {1.0}), std::invalid_argument);
  }
}

TEST_CASE("initial_residuum vanishes exactly on fully sampled noiseless data") {
  const int n = 16;
  const RealGrid x = shepp_logan(n, n);
  const CoilSet coils = smooth_coils(n, n, 2, 9).coils;
  MaskParams mp;
  mp.accel = 1.0;
  const SamplingMask full = make_mask(MaskPattern::cartesian, n, n, mp, 0);
  const MeasuredData z = simulate_measurement(x, coils, full, 0.0, 0);
  CHECK(initial_residuum(z, full.dft_layout()) < 1e-18);
}

TEST_CASE("landscape projection") {
  Rng rng(8);

  SUBCASE("identical trajectory states are degenerate") {
    const RealGrid s = random_real(6, 6, rng);
    CHECK_THROWS_AS(landscape_projection({s, s, s, s}, ImagePrior::make_tv()),
                    std::invalid_argument);
  }

  SUBCASE("directions are orthonormal and projections match inner products") {
    std::vector<RealGrid> traj;
    for (int k = 0; k < 12; ++k) traj.push_back(random_real(6, 6, rng));
    const LandscapeProjection lp = landscape_projection(traj, ImagePrior::make_tv(), 7.0, 9);

    double n1 = 0, n2 = 0, d12 = 0;
    for (std::size_t i = 0; i < lp.v1.size(); ++i) {
      n1 += lp.v1[i] * lp.v1[i];
      n2 += lp.v2[i] * lp.v2[i];
      d12 += lp.v1[i] * lp.v2[i];
    }
    CHECK(n1 == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(n2 == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(d12) < 1e-10);

    for (std::size_t k = 0; k < traj.size(); ++k) {
      double p1 = 0, p2 = 0;
      for (std::size_t i = 0; i < lp.v1.size(); ++i) {
        const double d = traj[k][i] - lp.origin[i];
        p1 += d * lp.v1[i];
        p2 += d * lp.v2[i];
      }
      CHECK(lp.xi1[k] == doctest::Approx(p1).epsilon(1e-10));
      CHECK(lp.xi2[k] == doctest::Approx(p2).epsilon(1e-10));
    }

    CHECK(lp.surface.rows() == 9);
    CHECK(lp.surface.cols() == 9);
    for (std::size_t i = 0; i < lp.surface.size(); ++i) {
      CHECK(lp.surface[i] > 0.0);
      CHECK(lp.surface[i] <= 1.0 + 1e-12); // exp(-R/T) with R >= 0
    }
  }
}
