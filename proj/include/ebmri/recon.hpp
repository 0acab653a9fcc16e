#pragma once

#include "ebmri/forward_model.hpp"
#include "ebmri/grid.hpp"
#include "ebmri/regularizers.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace ebmri {

// ---- image prior selection ----

enum class RegKind { none, tv, ebm };

/// The image regularizer plugged into the smooth part of the objective.
struct ImagePrior {
  RegKind kind = RegKind::none;
  TvConfig tv;
  EbmArchitecture ebm_arch;
  std::shared_ptr<const EbmParameters> ebm_theta;

  double value(const RealGrid &u) const;
  RealGrid grad(const RealGrid &u) const;

  static ImagePrior none();
  static ImagePrior make_tv(TvConfig cfg = {});
  static ImagePrior make_ebm(EbmArchitecture arch, std::shared_ptr<const EbmParameters> theta);
};

// ---- problem bundle ----

struct ReconProblem {
  MeasuredData z;    // k-space planes, DFT layout
  RealGrid mask_dft; // mask in DFT layout
  double scale = 1.0;
};

/// Scales the data by the max of the zero-filled reconstruction so image
/// intensities land near the trained range.  Throws on all-zero data.
ReconProblem normalize_problem(const MeasuredData &z, const RealGrid &mask_dft);
RealGrid denormalize(const RealGrid &u, double scale);

// ---- proximal operators ----

/// Projection onto the nonnegative orthant.
RealGrid prox_nonneg(const RealGrid &u);

/// Closed-form prox of the coil smoothness term: per coil and per real/imag
/// component solves (I + step*mu * D^T D) sigma = y through the DST
/// eigenbasis, with D the dirichlet-boundary gradient.
CoilSet prox_coil_smooth(const CoilSet &coils, double mu, double step);

/// Quadratic gradient energy of the sensitivities,
/// 1/2 sum_c (||D Re sigma_c||^2 + ||D Im sigma_c||^2).
double coil_smoothness(const CoilSet &coils);

// ---- backtracking prox-gradient step ----

template <typename Vec>
struct ProxGradStep {
  Vec x;
  double L = 0;
};

/// One prox-gradient step with Lipschitz backtracking: accepts once the
/// descent inequality holds, returns (x, gamma1 * L); otherwise L <- L/gamma2.
/// Throws after `cap` rejected trials.
template <typename Vec>
ProxGradStep<Vec> backtrack(const std::function<double(const Vec &)> &energy, double energy_at_x0,
                            const Vec &grad_at_x0,
                            const std::function<Vec(const Vec &, double)> &prox, const Vec &x0,
                            double L0, double gamma1, double gamma2, int cap = 60);

// ---- MAP reconstruction ----

struct IpalmConfig {
  int iters = 100; // K
  double gamma1 = 0.9;
  double gamma2 = 0.5;
  double init_L_u = 1.0;
  double init_L_sigma = 1.0;
  double lambda = 1.0;
  double mu = 10.0;
  ImagePrior prior;
  bool fix_coils = false;   // single-coil mode: C = 1, sigma = 1 throughout
  double energy_tol = 1e-8; // relative energy change early stop; 0 disables
  int max_backtracks = 60;
};

struct ReconResult {
  RealGrid u;
  CoilSet coils;
  std::vector<double> energy; // index 0 = at initialization
  std::vector<double> L_u_trace;
  std::vector<double> L_sigma_trace;
  int iters_run = 0;
  double wall_seconds = 0;
};

ReconResult ipalm_solve(const ReconProblem &problem, const IpalmConfig &cfg);

// ---- posterior sampling ----

struct PosteriorConfig {
  long burn_in = 10000;
  int thin = 15;
  long total_iters = 160000;
  double lambda = 1.0;
  double zeta = 2e-4;
  ImagePrior prior;
  std::uint64_t seed = 0;
};

/// ULA over u under H(u, Sigma_fixed), initialized from uniform noise,
/// keeping every thin-th iterate after burn-in.  Returns the kept count.
long posterior_sample(const ReconProblem &problem, const CoilSet &coils_fixed,
                      const PosteriorConfig &cfg,
                      const std::function<void(const RealGrid &)> &sink);

/// Convenience variant that materializes the kept samples.
std::vector<RealGrid> posterior_collect(const ReconProblem &problem, const CoilSet &coils_fixed,
                                        const PosteriorConfig &cfg);

/// Pixel-wise sample mean and population variance (two-pass).
std::pair<RealGrid, RealGrid> mmse_and_variance(const std::vector<RealGrid> &samples);

/// Single-pass accumulator used where materializing samples is too large.
class StreamingMoments {
public:
  void push(const RealGrid &sample);
  long count() const { return n_; }
  RealGrid mean() const;
  RealGrid variance() const; // population variance

private:
  long n_ = 0;
  RealGrid mean_, m2_;
};

} // namespace ebmri
