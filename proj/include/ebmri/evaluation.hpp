#pragma once

#include "ebmri/grid.hpp"
#include "ebmri/recon.hpp"

#include <vector>

namespace ebmri {

/// Peak signal-to-noise ratio in dB with peak = max(ref).  Identical inputs
/// give +infinity; table writers cap the sentinel at 300 dB.
double psnr(const RealGrid &x, const RealGrid &ref);
double psnr_capped(const RealGrid &x, const RealGrid &ref);

/// ||x - ref||^2 / ||ref||^2.
double nmse(const RealGrid &x, const RealGrid &ref);

/// Mean local SSIM, 7x7 uniform window over valid positions only,
/// K1 = 0.01, K2 = 0.03, dynamic range = max(ref) - min(ref).
double ssim(const RealGrid &x, const RealGrid &ref);

struct Metrics {
  double psnr_db = 0;
  double nmse = 0;
  double ssim = 0;
};
Metrics evaluate_pair(const RealGrid &x, const RealGrid &ref);

/// Per-coil residual pi_c = sigma_c / |Sigma|^2 * sum_i conj(sigma_i) u_i - u_c
/// with u_c = ifft2(z_c) from fully sampled data; exact sensitivities leave
/// only noise.  Where |Sigma| = 0 the residual is -u_c.
struct NullSpaceResidual {
  CoilSet per_coil;
  RealGrid rss_map;
  double norm = 0;
};
NullSpaceResidual null_space_residual(const CoilSet &sigma, const CoilSet &full_kspace);

/// Least-squares cubic spline with 5 equally spaced knots over the recon
/// intensity range (C2 by construction via the truncated power basis).
struct SplineCalibration {
  std::vector<double> knots;  // size 5
  std::vector<double> coeffs; // 1, x, x^2, x^3, (x-k1)^3+, (x-k2)^3+, (x-k3)^3+
};
SplineCalibration spline_fit(const std::vector<double> &recon_vals,
                             const std::vector<double> &ref_vals);
double spline_apply(const SplineCalibration &s, double x);
RealGrid spline_apply(const SplineCalibration &s, const RealGrid &g);

/// Ordinary least squares of the per-problem optimal lambda against the
/// initial data residuum.
struct LambdaFit {
  double slope = 0;
  double intercept = 0;
};
LambdaFit lambda_fit(const std::vector<double> &residuum, const std::vector<double> &lambda_opt);

/// Prediction clamped to stay positive.
double lambda_predict(const LambdaFit &fit, double residuum);

/// Initial data residuum sum_c ||F_M(sigma_c^0 u^0) - z_c||^2 used as the
/// regression abscissa.
double initial_residuum(const MeasuredData &z, const RealGrid &mask_dft);

/// Mean intensity per radius bin, measured from the grid center; bin edges
/// split [0, max radius] evenly.
std::vector<double> radial_profile(const RealGrid &g, int bins);

/// Two-component PCA projection of a sampling trajectory plus the
/// exp(-R/temperature) surface evaluated on a centered lattice.
struct LandscapeProjection {
  std::vector<double> v1, v2; // orthonormal principal directions, flattened
  std::vector<double> xi1, xi2; // projected trajectory coordinates
  RealGrid surface;             // grid_pts x grid_pts
  double extent = 0;            // lattice spans [-extent, extent] per axis
  RealGrid origin;              // the trajectory mean the lattice is centered on
};
LandscapeProjection landscape_projection(const std::vector<RealGrid> &trajectory,
                                         const ImagePrior &reg, double temperature = 7.0,
                                         int grid_pts = 41, double extent = 0.0);

} // namespace ebmri
