// Command-line front end: phantom/mask generation, toy EBM training, MAP
// reconstruction, posterior sampling, unconditional synthesis, evaluation and
// calibration.  Every command writes its outputs plus a manifest.json into a
// run directory and exits nonzero with a machine-readable error JSON on
// failure.

#include <CLI11.hpp>

#include "ebmri/data.hpp"
#include "ebmri/ebm_training.hpp"
#include "ebmri/evaluation.hpp"
#include "ebmri/forward_model.hpp"
#include "ebmri/npy.hpp"
#include "ebmri/numerics.hpp"
#include "ebmri/png16.hpp"
#include "ebmri/recon.hpp"
#include "ebmri/runconfig.hpp"

#include <chrono>
#include <filesystem>
#include <iostream>

using namespace ebmri;
using nlohmann::json;

namespace {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

MaskPattern parse_pattern(const std::string &s) {
  if (s == "cartesian") return MaskPattern::cartesian;
  if (s == "random") return MaskPattern::random;
  if (s == "radial") return MaskPattern::radial;
  if (s == "spiral") return MaskPattern::spiral;
  if (s == "gaussian2d") return MaskPattern::gaussian2d;
  throw CLI::ValidationError("pattern", "unknown pattern: " + s);
}

struct PriorFlags {
  std::string reg = "tv";
  double tv_eps = 1e-3;
  std::string checkpoint;
};

void add_prior_flags(CLI::App *cmd, PriorFlags &f) {
  cmd->add_option("--reg", f.reg, "image regularizer: none|tv|ebm")
      ->check(CLI::IsMember({"none", "tv", "ebm"}));
  cmd->add_option("--tv-eps", f.tv_eps, "Charbonnier epsilon");
  cmd->add_option("--checkpoint", f.checkpoint, "EBM checkpoint (required for --reg ebm)");
}

ImagePrior build_prior(const PriorFlags &f) {
  if (f.reg == "none") return ImagePrior::none();
  if (f.reg == "tv") {
    TvConfig cfg;
    cfg.epsilon = f.tv_eps;
    return ImagePrior::make_tv(cfg);
  }
  if (f.checkpoint.empty())
    throw std::invalid_argument("--reg ebm needs --checkpoint");
  auto [arch, theta] = load_checkpoint(f.checkpoint);
  return ImagePrior::make_ebm(arch, std::make_shared<EbmParameters>(std::move(theta)));
}

/// Measurement inputs shared by reconstruct/posterior: either measured
/// k-space or a simulation from a reference image.
struct ProblemFlags {
  std::string kspace, mask_path, image, coils;
  double noise_std = 0.0;
  std::uint64_t noise_seed = 0;
  bool no_normalize = false;
};

void add_problem_flags(CLI::App *cmd, ProblemFlags &f) {
  cmd->add_option("--kspace", f.kspace, "measured multi-coil k-space (c16 NPY, DFT layout)");
  cmd->add_option("--mask", f.mask_path, "sampling mask NPY (centered layout)")->required();
  cmd->add_option("--image", f.image, "reference image to simulate a measurement from");
  cmd->add_option("--coils", f.coils, "simulated coil sensitivities (c16 NPY stack)");
  cmd->add_option("--noise-std", f.noise_std, "complex noise std per component (simulation)");
  cmd->add_option("--noise-seed", f.noise_seed, "noise seed (simulation)");
  cmd->add_flag("--no-normalize", f.no_normalize, "skip intensity normalization");
}

struct LoadedProblem {
  ReconProblem problem;
  SamplingMask mask;
  int coil_count = 1;
  RealGrid reference;     // empty unless simulating
  CoilSet true_coils;     // empty unless simulating multi-coil
  bool has_reference = false;
};

LoadedProblem load_problem(const ProblemFlags &f) {
  LoadedProblem out;
  out.mask = load_mask(f.mask_path);
  const RealGrid mdft = out.mask.dft_layout();

  MeasuredData z;
  if (!f.image.empty()) {
    out.reference = load_real(f.image);
    out.has_reference = true;
    CoilSet coils;
    if (!f.coils.empty())
      coils = load_coils(f.coils);
    else
      coils = {ComplexGrid(out.reference.rows(), out.reference.cols(), cplx(1, 0))};
    out.true_coils = coils;
    z = simulate_measurement(out.reference, coils, out.mask, f.noise_std, f.noise_seed);
  } else if (!f.kspace.empty()) {
    z.planes = load_coils(f.kspace);
    z.noise_std = f.noise_std;
  } else {
    throw std::invalid_argument("provide either --kspace or --image");
  }
  out.coil_count = static_cast<int>(z.planes.size());

  if (f.no_normalize) {
    out.problem.z = std::move(z);
    out.problem.mask_dft = mdft;
    out.problem.scale = 1.0;
  } else {
    out.problem = normalize_problem(z, mdft);
  }
  return out;
}

json metrics_json(const RealGrid &x, const RealGrid &ref) {
  const Metrics m = evaluate_pair(x, ref);
  return {{"psnr_db", m.psnr_db}, {"nmse", m.nmse}, {"ssim", m.ssim}};
}

// ---- commands ----

int cmd_phantom(const std::string &out, int rows, int cols, int coils, std::uint64_t seed) {
  Timer timer;
  ensure_run_dir(out);
  const RealGrid x = shepp_logan(rows, cols);
  save_tensor(x, out + "/phantom.npy");
  write_png16(x, out + "/phantom.png");
  json cfg = {{"rows", rows}, {"cols", cols}, {"coils", coils}, {"seed", seed}};
  json man = manifest_base("phantom", cfg);
  if (coils > 0) {
    const SimulatedCoils sim = smooth_coils(rows, cols, coils, seed);
    save_tensor(sim.coils, out + "/coils.npy");
    write_png16(rss(sim.coils), out + "/coils_rss.png");
    man["outputs"] = {"phantom.npy", "phantom.png", "coils.npy", "coils_rss.png"};
  } else {
    man["outputs"] = {"phantom.npy", "phantom.png"};
  }
  man["wall_seconds"] = timer.seconds();
  write_json(man, out + "/manifest.json");
  return exit_ok;
}

int cmd_mask(const std::string &out, const std::string &pattern, int rows, int cols,
             const MaskParams &params, std::uint64_t seed) {
  Timer timer;
  ensure_run_dir(out);
  const SamplingMask m = make_mask(parse_pattern(pattern), rows, cols, params, seed);
  save_mask(m, out + "/mask.npy");
  write_png16(m.mask, out + "/mask.png", 0.0, 1.0);
  json cfg = {{"pattern", pattern},
              {"rows", rows},
              {"cols", cols},
              {"accel", params.accel},
              {"acl_fraction", params.acl_fraction},
              {"phase_dir", params.phase_dir == PhaseDir::vertical ? "vertical" : "horizontal"},
              {"spokes", params.spokes},
              {"spiral_turns", params.spiral_turns},
              {"gauss_sigma_frac", params.gauss_sigma_frac},
              {"seed", seed}};
  json man = manifest_base("mask", cfg);
  man["sampled_points"] = m.sampled_points();
  man["acceleration_factor"] = acceleration_factor(m);
  man["outputs"] = {"mask.npy", "mask.npy.json", "mask.png"};
  man["wall_seconds"] = timer.seconds();
  write_json(man, out + "/manifest.json");
  return exit_ok;
}

struct TrainFlags {
  std::string data_dir;
  int blobs = 0;
  int rows = 16, cols = 16;
  int layers = 2, base_features = 8;
  double ratio = 1.75, leak = 0.05;
  TrainConfig cfg;
  int holdout = 32;
};

int cmd_train(const std::string &out, const TrainFlags &f) {
  Timer timer;
  ensure_run_dir(out);

  std::vector<RealGrid> dataset;
  if (f.blobs > 0) {
    dataset = blob_dataset(f.blobs, f.rows, f.cols, f.cfg.seed);
  } else if (!f.data_dir.empty()) {
    for (auto &rec : load_slice_directory(f.data_dir)) dataset.push_back(std::move(rec.image));
    if (dataset.empty()) throw std::invalid_argument("no .npy slices in " + f.data_dir);
  } else {
    throw std::invalid_argument("provide --data-dir or --blobs");
  }

  EbmArchitecture arch;
  arch.layers = f.layers;
  arch.base_features = f.base_features;
  arch.feature_ratio = f.ratio;
  arch.leak = f.leak;
  arch.crop_rows = dataset.front().rows();
  arch.crop_cols = dataset.front().cols();

  const auto checkpoint_cb = [&](int update, const EbmParameters &theta) {
    const std::string name =
        update == f.cfg.total_updates ? "checkpoint.ebm" : "checkpoint_" + std::to_string(update) + ".ebm";
    save_checkpoint(arch, theta, out + "/" + name);
  };
  const TrainResult r = train(dataset, arch, f.cfg, checkpoint_cb);
  write_train_log_csv(r.log, out + "/train_log.csv");

  json cfg_echo = {{"data_dir", f.data_dir}, {"blobs", f.blobs},
                   {"rows", f.rows},         {"cols", f.cols},
                   {"layers", f.layers},     {"base_features", f.base_features},
                   {"ratio", f.ratio},       {"leak", f.leak},
                   {"lr", f.cfg.lr},         {"batch", f.cfg.batch},
                   {"updates", f.cfg.total_updates}, {"jmax", f.cfg.ula_steps_max},
                   {"zeta", f.cfg.ula_step}, {"pi_reinit", f.cfg.pi_reinit},
                   {"data_noise_std", f.cfg.data_noise_std},
                   {"buffer", f.cfg.buffer_capacity}, {"seed", f.cfg.seed}};
  json man = manifest_base("train", cfg_echo);
  man["parameter_count"] = ebm_layout(arch).total;
  man["updates_run"] = r.log.size();

  // Held-out energy gap: fresh blobs the model never saw against uniform
  // noise grids, a quick health indicator for the toy runs.
  if (f.blobs > 0 && f.holdout > 0) {
    const auto holdout = blob_dataset(f.holdout, f.rows, f.cols, f.cfg.seed + 7777);
    Rng noise_rng(f.cfg.seed + 8888);
    double e_data = 0, e_noise = 0;
    for (const auto &x : holdout) {
      e_data += ebm_value(x, r.theta, arch);
      RealGrid n(f.rows, f.cols);
      for (std::size_t i = 0; i < n.size(); ++i) n[i] = noise_rng.uniform();
      e_noise += ebm_value(n, r.theta, arch);
    }
    man["holdout_data_energy"] = e_data / f.holdout;
    man["uniform_noise_energy"] = e_noise / f.holdout;
  }
  man["wall_seconds"] = timer.seconds();
  write_json(man, out + "/manifest.json");
  return exit_ok;
}

struct ReconFlags {
  ProblemFlags problem;
  PriorFlags prior;
  double lambda = 1.0;
  double mu = 10.0;
  int iters = 100;
  double gamma1 = 0.9, gamma2 = 0.5;
  bool fix_coils = false;
  double energy_tol = 1e-8;
};

int cmd_reconstruct(const std::string &out, const ReconFlags &f) {
  Timer timer;
  ensure_run_dir(out);
  LoadedProblem lp = load_problem(f.problem);

  IpalmConfig cfg;
  cfg.iters = f.iters;
  cfg.lambda = f.lambda;
  cfg.mu = f.mu;
  cfg.gamma1 = f.gamma1;
  cfg.gamma2 = f.gamma2;
  cfg.prior = build_prior(f.prior);
  cfg.fix_coils = f.fix_coils || lp.coil_count == 1;
  cfg.energy_tol = f.energy_tol;

  const ReconResult r = ipalm_solve(lp.problem, cfg);
  const RealGrid u = denormalize(r.u, lp.problem.scale);
  save_tensor(u, out + "/u.npy");
  write_png16(u, out + "/u.png");
  if (!cfg.fix_coils) save_tensor(r.coils, out + "/coils_est.npy");

  json cfg_echo = {{"reg", f.prior.reg},     {"lambda", f.lambda},  {"mu", f.mu},
                   {"iters", f.iters},       {"gamma1", f.gamma1},  {"gamma2", f.gamma2},
                   {"fix_coils", cfg.fix_coils}, {"noise_std", f.problem.noise_std},
                   {"noise_seed", f.problem.noise_seed}, {"mask", f.problem.mask_path},
                   {"scale", lp.problem.scale}};
  json man = manifest_base("reconstruct", cfg_echo);
  man["energy_trace"] = r.energy;
  man["iterations_run"] = r.iters_run;
  man["wall_seconds_solver"] = r.wall_seconds;
  if (lp.has_reference) {
    RealGrid ref = lp.reference;
    if (lp.coil_count > 1) {
      const RealGrid rho = rss(lp.true_coils);
      for (std::size_t i = 0; i < ref.size(); ++i) ref[i] *= rho[i];
    }
    man["metrics"] = metrics_json(u, ref);
    const auto [u0, s0] = zf_rss_init(lp.problem.z, lp.problem.mask_dft);
    man["metrics_zero_filled"] = metrics_json(denormalize(u0, lp.problem.scale), ref);
  }
  man["outputs"] = {"u.npy", "u.png"};
  man["wall_seconds"] = timer.seconds();
  write_json(man, out + "/manifest.json");
  return exit_ok;
}

struct PosteriorFlags {
  ProblemFlags problem;
  PriorFlags prior;
  std::string coils_est;
  PosteriorConfig cfg;
  int save_samples = 0;
};

int cmd_posterior(const std::string &out, PosteriorFlags f) {
  Timer timer;
  ensure_run_dir(out);
  LoadedProblem lp = load_problem(f.problem);

  CoilSet coils;
  if (!f.coils_est.empty())
    coils = load_coils(f.coils_est);
  else
    coils = {ComplexGrid(lp.problem.mask_dft.rows(), lp.problem.mask_dft.cols(), cplx(1, 0))};

  f.cfg.prior = build_prior(f.prior);
  StreamingMoments acc;
  int saved = 0;
  const long kept = posterior_sample(lp.problem, coils, f.cfg, [&](const RealGrid &s) {
    acc.push(s);
    if (saved < f.save_samples) {
      save_tensor(denormalize(s, lp.problem.scale), out + "/sample_" + std::to_string(saved) + ".npy");
      ++saved;
    }
  });

  const RealGrid mean = denormalize(acc.mean(), lp.problem.scale);
  RealGrid var = acc.variance();
  scale(var, lp.problem.scale * lp.problem.scale);
  save_tensor(mean, out + "/posterior_mean.npy");
  save_tensor(prox_nonneg(mean), out + "/posterior_mmse.npy");
  save_tensor(var, out + "/posterior_var.npy");
  write_png16(prox_nonneg(mean), out + "/posterior_mmse.png");
  write_png16(var, out + "/posterior_var.png");

  json cfg_echo = {{"burn_in", f.cfg.burn_in}, {"thin", f.cfg.thin},
                   {"total_iters", f.cfg.total_iters}, {"lambda", f.cfg.lambda},
                   {"zeta", f.cfg.zeta}, {"seed", f.cfg.seed}, {"reg", f.prior.reg},
                   {"mask", f.problem.mask_path}, {"coils_est", f.coils_est}};
  json man = manifest_base("posterior", cfg_echo);
  man["kept_samples"] = kept;
  if (lp.has_reference && lp.coil_count == 1)
    man["metrics_mmse"] = metrics_json(prox_nonneg(mean), lp.reference);
  man["outputs"] = {"posterior_mean.npy", "posterior_mmse.npy", "posterior_var.npy"};
  man["wall_seconds"] = timer.seconds();
  write_json(man, out + "/manifest.json");
  return exit_ok;
}

int cmd_synthesize(const std::string &out, const std::string &checkpoint, int samples, int steps,
                   double zeta, int thin, std::uint64_t seed) {
  Timer timer;
  ensure_run_dir(out);
  auto [arch, theta] = load_checkpoint(checkpoint);

  json man = manifest_base("synthesize", {{"checkpoint", checkpoint},
                                          {"samples", samples},
                                          {"steps", steps},
                                          {"zeta", zeta},
                                          {"thin", thin},
                                          {"seed", seed}});
  std::vector<std::string> outputs;
  for (int s = 0; s < samples; ++s) {
    Rng rng(seed + static_cast<std::uint64_t>(s) * 0x9e37ULL);
    RealGrid x(arch.crop_rows, arch.crop_cols);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();
    if (thin > 0) {
      // keep the intermediate trajectory for landscape inspection
      int idx = 0;
      for (int j = 0; j < steps; j += thin) {
        x = ula_chain(
            x, [&](const RealGrid &g) { return ebm_grad_input(g, theta, arch); }, zeta,
            std::min(thin, steps - j), rng);
        save_tensor(x, out + "/traj_" + std::to_string(s) + "_" + std::to_string(idx++) + ".npy");
      }
    } else {
      x = ula_chain(
          x, [&](const RealGrid &g) { return ebm_grad_input(g, theta, arch); }, zeta, steps, rng);
    }
    const std::string name = "sample_" + std::to_string(s);
    save_tensor(x, out + "/" + name + ".npy");
    write_png16(prox_nonneg(x), out + "/" + name + ".png");
    outputs.push_back(name + ".npy");
  }
  man["outputs"] = outputs;
  man["wall_seconds"] = timer.seconds();
  write_json(man, out + "/manifest.json");
  return exit_ok;
}

struct EvalExtras {
  std::string nsr_coils, nsr_kspace; // null-space residual inputs
  std::string traj_dir, traj_checkpoint; // landscape projection inputs
  double temperature = 7.0;
  int surface_pts = 41;
};

int cmd_eval(const std::string &out, const std::vector<std::string> &recon_paths,
             const std::vector<std::string> &ref_paths, const std::string &spline_path,
             const EvalExtras &extras) {
  Timer timer;
  if ((recon_paths.size() != ref_paths.size()) ||
      (recon_paths.empty() && extras.nsr_coils.empty() && extras.traj_dir.empty()))
    throw std::invalid_argument("--recon and --ref must pair up");
  ensure_run_dir(out);

  SplineCalibration spline;
  const bool calibrated = !spline_path.empty();
  if (calibrated) {
    std::ifstream f(spline_path);
    if (!f) throw NpyError(NpyError::Kind::io, "cannot open spline: " + spline_path);
    const json j = json::parse(f);
    spline.knots = j.at("knots").get<std::vector<double>>();
    spline.coeffs = j.at("coeffs").get<std::vector<double>>();
  }

  std::ofstream csv(out + "/metrics.csv");
  csv << "recon,ref,psnr_db,nmse,ssim\n";
  json rows = json::array();
  Metrics agg;
  for (std::size_t i = 0; i < recon_paths.size(); ++i) {
    RealGrid x = load_real(recon_paths[i]);
    const RealGrid ref = load_real(ref_paths[i]);
    if (calibrated) x = spline_apply(spline, x);
    const Metrics m = evaluate_pair(x, ref);
    csv << recon_paths[i] << ',' << ref_paths[i] << ',' << m.psnr_db << ',' << m.nmse << ','
        << m.ssim << '\n';
    rows.push_back({{"recon", recon_paths[i]},
                    {"ref", ref_paths[i]},
                    {"psnr_db", m.psnr_db},
                    {"nmse", m.nmse},
                    {"ssim", m.ssim}});
    agg.psnr_db += m.psnr_db / recon_paths.size();
    agg.nmse += m.nmse / recon_paths.size();
    agg.ssim += m.ssim / recon_paths.size();
  }
  if (recon_paths.size() > 1) {
    csv << "aggregate,mean," << agg.psnr_db << ',' << agg.nmse << ',' << agg.ssim << '\n';
    rows.push_back({{"recon", "aggregate"},
                    {"ref", "mean"},
                    {"psnr_db", agg.psnr_db},
                    {"nmse", agg.nmse},
                    {"ssim", agg.ssim}});
  }
  json man = manifest_base("eval", {{"pairs", recon_paths.size()}, {"spline", spline_path}});
  man["metrics"] = rows;
  man["outputs"] = json::array({"metrics.csv"});

  if (!extras.nsr_coils.empty()) {
    const CoilSet sigma = load_coils(extras.nsr_coils);
    const CoilSet kspace = load_coils(extras.nsr_kspace);
    const NullSpaceResidual nsr = null_space_residual(sigma, kspace);
    save_tensor(nsr.rss_map, out + "/nsr_rss.npy");
    write_png16(nsr.rss_map, out + "/nsr_rss.png");
    man["nullspace_residual_norm"] = nsr.norm;
    man["outputs"].push_back("nsr_rss.npy");
  }

  if (!extras.traj_dir.empty()) {
    std::vector<std::filesystem::path> paths;
    for (const auto &e : std::filesystem::directory_iterator(extras.traj_dir))
      if (e.path().extension() == ".npy") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    std::vector<RealGrid> traj;
    for (const auto &p : paths) traj.push_back(load_real(p.string()));
    auto [arch, theta] = load_checkpoint(extras.traj_checkpoint);
    const ImagePrior prior =
        ImagePrior::make_ebm(arch, std::make_shared<EbmParameters>(std::move(theta)));
    const LandscapeProjection lp =
        landscape_projection(traj, prior, extras.temperature, extras.surface_pts);
    save_tensor(lp.surface, out + "/landscape_surface.npy");
    write_png16(lp.surface, out + "/landscape_surface.png", 0.0, 1.0);
    write_json({{"xi1", lp.xi1}, {"xi2", lp.xi2}, {"extent", lp.extent}},
               out + "/landscape_path.json");
    man["outputs"].push_back("landscape_surface.npy");
  }

  man["wall_seconds"] = timer.seconds();
  write_json(man, out + "/manifest.json");
  write_json(rows, out + "/metrics.json");
  return exit_ok;
}

struct CalibrateFlags {
  std::string mode = "spline";
  std::string recon, ref;
  std::vector<std::string> images;
  std::string mask_path;
  double noise_std = 0.01;
  std::uint64_t seed = 0;
  PriorFlags prior;
  double mu = 10.0;
  int iters = 40;
  double grid_lo = 1e-3, grid_hi = 10.0;
  int grid_n = 15;
};

int cmd_calibrate(const std::string &out, const CalibrateFlags &f) {
  Timer timer;
  ensure_run_dir(out);
  json man = manifest_base("calibrate", {{"mode", f.mode}});

  if (f.mode == "spline") {
    if (f.recon.empty() || f.ref.empty())
      throw std::invalid_argument("spline mode needs --recon and --ref");
    const RealGrid x = load_real(f.recon);
    const RealGrid ref = load_real(f.ref);
    if (!x.same_shape(ref)) throw std::invalid_argument("image shapes differ");
    std::vector<double> xs(x.data(), x.data() + x.size());
    std::vector<double> ys(ref.data(), ref.data() + ref.size());
    const SplineCalibration s = spline_fit(xs, ys);
    write_json({{"knots", s.knots}, {"coeffs", s.coeffs}}, out + "/spline.json");
    man["outputs"] = {"spline.json"};
  } else if (f.mode == "lambda") {
    // Per validation image: grid search the regularization weight, then
    // regress the optima against the initial data residuum.
    if (f.images.empty()) throw std::invalid_argument("lambda mode needs --images");
    const SamplingMask mask = load_mask(f.mask_path);
    const ImagePrior prior = build_prior(f.prior);
    std::vector<double> residua, optima;
    json per_image = json::array();
    for (const auto &path : f.images) {
      const RealGrid ref = load_real(path);
      const CoilSet coils = {ComplexGrid(ref.rows(), ref.cols(), cplx(1, 0))};
      const MeasuredData z = simulate_measurement(ref, coils, mask, f.noise_std, f.seed);
      const ReconProblem p = normalize_problem(z, mask.dft_layout());
      const double res = initial_residuum(p.z, p.mask_dft);

      double best_lambda = f.grid_lo, best_err = std::numeric_limits<double>::infinity();
      for (int k = 0; k < f.grid_n; ++k) {
        const double lg = std::log(f.grid_lo) +
                          (std::log(f.grid_hi) - std::log(f.grid_lo)) * k /
                              std::max(1, f.grid_n - 1);
        const double lambda = std::exp(lg);
        IpalmConfig cfg;
        cfg.iters = f.iters;
        cfg.lambda = lambda;
        cfg.mu = f.mu;
        cfg.prior = prior;
        cfg.fix_coils = true;
        const ReconResult r = ipalm_solve(p, cfg);
        RealGrid diff = denormalize(r.u, p.scale);
        axpy(diff, -1.0, ref);
        const double err = norm_sq(diff);
        if (err < best_err) {
          best_err = err;
          best_lambda = lambda;
        }
      }
      residua.push_back(res);
      optima.push_back(best_lambda);
      per_image.push_back({{"image", path}, {"residuum", res}, {"lambda_opt", best_lambda}});
    }
    const LambdaFit fit = lambda_fit(residua, optima);
    write_json({{"slope", fit.slope}, {"intercept", fit.intercept}}, out + "/lambda_fit.json");
    man["per_image"] = per_image;
    man["outputs"] = {"lambda_fit.json"};
  } else {
    throw std::invalid_argument("unknown calibrate mode: " + f.mode);
  }
  man["wall_seconds"] = timer.seconds();
  write_json(man, out + "/manifest.json");
  return exit_ok;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"MRI reconstruction with a learned energy-based image prior"};
  app.require_subcommand(1);
  app.fallthrough(); // --out/--seed may follow the subcommand
  app.set_config("--config", "", "key = value configuration file (sections per command)");
  app.allow_config_extras(false);

  std::string out = "run";
  app.add_option("--out", out, "run directory")->capture_default_str();
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "global seed");

  // phantom
  auto *phantom = app.add_subcommand("phantom", "generate a Shepp-Logan phantom and coils");
  int ph_rows = 128, ph_cols = 128, ph_coils = 0;
  phantom->add_option("--rows", ph_rows);
  phantom->add_option("--cols", ph_cols);
  phantom->add_option("--coils", ph_coils, "number of simulated coils (0 = none)");

  // mask
  auto *maskc = app.add_subcommand("mask", "generate a k-space sampling mask");
  std::string mk_pattern = "cartesian";
  int mk_rows = 128, mk_cols = 128;
  MaskParams mk;
  std::string mk_phase = "vertical";
  maskc->add_option("--pattern", mk_pattern, "cartesian|random|radial|spiral|gaussian2d");
  maskc->add_option("--rows", mk_rows);
  maskc->add_option("--cols", mk_cols);
  maskc->add_option("--accel", mk.accel);
  maskc->add_option("--acl", mk.acl_fraction, "auto-calibration fraction of lines");
  maskc->add_option("--phase-dir", mk_phase)->check(CLI::IsMember({"vertical", "horizontal"}));
  maskc->add_option("--spokes", mk.spokes);
  maskc->add_option("--turns", mk.spiral_turns);
  maskc->add_option("--sigma-frac", mk.gauss_sigma_frac);

  // train
  auto *trainc = app.add_subcommand("train", "maximum-likelihood training of the energy model");
  TrainFlags tf;
  trainc->add_option("--data-dir", tf.data_dir, "directory of f8 NPY slices");
  trainc->add_option("--blobs", tf.blobs, "use a synthetic blob dataset of this size");
  trainc->add_option("--rows", tf.rows);
  trainc->add_option("--cols", tf.cols);
  trainc->add_option("--layers", tf.layers);
  trainc->add_option("--base-features", tf.base_features);
  trainc->add_option("--ratio", tf.ratio);
  trainc->add_option("--leak", tf.leak);
  trainc->add_option("--lr", tf.cfg.lr);
  trainc->add_option("--batch", tf.cfg.batch);
  trainc->add_option("--updates", tf.cfg.total_updates);
  trainc->add_option("--jmax", tf.cfg.ula_steps_max);
  trainc->add_option("--zeta", tf.cfg.ula_step);
  trainc->add_option("--pi-reinit", tf.cfg.pi_reinit);
  trainc->add_option("--data-noise-std", tf.cfg.data_noise_std);
  trainc->add_option("--buffer", tf.cfg.buffer_capacity);
  trainc->add_option("--checkpoint-every", tf.cfg.checkpoint_every);
  trainc->add_option("--holdout", tf.holdout, "held-out blobs for the manifest energy gap");

  // reconstruct
  auto *reconc = app.add_subcommand("reconstruct", "MAP reconstruction via inertial proximal steps");
  ReconFlags rf;
  add_problem_flags(reconc, rf.problem);
  add_prior_flags(reconc, rf.prior);
  reconc->add_option("--lambda", rf.lambda, "image regularization weight");
  reconc->add_option("--mu", rf.mu, "coil smoothness weight");
  reconc->add_option("--iters", rf.iters);
  reconc->add_option("--gamma1", rf.gamma1);
  reconc->add_option("--gamma2", rf.gamma2);
  reconc->add_flag("--fix-coils", rf.fix_coils, "freeze a single unit coil");
  reconc->add_option("--energy-tol", rf.energy_tol);

  // posterior
  auto *postc = app.add_subcommand("posterior", "Langevin posterior sampling: mean and variance maps");
  PosteriorFlags pf;
  add_problem_flags(postc, pf.problem);
  add_prior_flags(postc, pf.prior);
  postc->add_option("--coils-est", pf.coils_est, "frozen sensitivities from a MAP run");
  postc->add_option("--burn-in", pf.cfg.burn_in);
  postc->add_option("--thin", pf.cfg.thin);
  postc->add_option("--total-iters", pf.cfg.total_iters);
  postc->add_option("--lambda", pf.cfg.lambda);
  postc->add_option("--zeta", pf.cfg.zeta);
  postc->add_option("--save-samples", pf.save_samples, "persist the first N kept samples");

  // synthesize
  auto *synthc = app.add_subcommand("synthesize", "sample images from the prior without data");
  std::string sy_checkpoint;
  int sy_samples = 4, sy_steps = 2000, sy_thin = 0;
  double sy_zeta = 4.5e-4;
  synthc->add_option("--checkpoint", sy_checkpoint)->required();
  synthc->add_option("--samples", sy_samples);
  synthc->add_option("--steps", sy_steps);
  synthc->add_option("--zeta", sy_zeta);
  synthc->add_option("--thin", sy_thin, "save the trajectory every N steps (0 = end only)");

  // eval
  auto *evalc = app.add_subcommand("eval", "image quality metrics");
  std::vector<std::string> ev_recon, ev_ref;
  std::string ev_spline;
  EvalExtras ev_extras;
  evalc->add_option("--recon", ev_recon, "reconstruction NPY (repeatable)");
  evalc->add_option("--ref", ev_ref, "reference NPY (repeatable)");
  evalc->add_option("--spline", ev_spline, "intensity calibration to apply first");
  evalc->add_option("--nsr-coils", ev_extras.nsr_coils, "sensitivities for the null-space residual");
  evalc->add_option("--nsr-kspace", ev_extras.nsr_kspace, "fully sampled k-space stack");
  evalc->add_option("--landscape-traj", ev_extras.traj_dir, "directory of trajectory NPYs");
  evalc->add_option("--landscape-checkpoint", ev_extras.traj_checkpoint);
  evalc->add_option("--temperature", ev_extras.temperature, "landscape softening temperature");
  evalc->add_option("--surface-pts", ev_extras.surface_pts, "landscape lattice resolution");

  // calibrate
  auto *calc = app.add_subcommand("calibrate", "spline intensity fit or lambda regression");
  CalibrateFlags cf;
  calc->add_option("--mode", cf.mode)->check(CLI::IsMember({"spline", "lambda"}));
  calc->add_option("--recon", cf.recon);
  calc->add_option("--ref", cf.ref);
  calc->add_option("--images", cf.images, "validation images (repeatable)");
  calc->add_option("--mask", cf.mask_path);
  calc->add_option("--noise-std", cf.noise_std);
  add_prior_flags(calc, cf.prior);
  calc->add_option("--mu", cf.mu);
  calc->add_option("--iters", cf.iters);
  calc->add_option("--grid-lo", cf.grid_lo);
  calc->add_option("--grid-hi", cf.grid_hi);
  calc->add_option("--grid-n", cf.grid_n);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    if (e.get_exit_code() == 0) return app.exit(e); // --help
    std::cerr << e.what() << std::endl;
    return emit_error(exit_bad_config, "config", e.what(), out);
  }

  try {
    if (*phantom) return cmd_phantom(out, ph_rows, ph_cols, ph_coils, seed);
    if (*maskc) {
      mk.phase_dir = mk_phase == "horizontal" ? PhaseDir::horizontal : PhaseDir::vertical;
      return cmd_mask(out, mk_pattern, mk_rows, mk_cols, mk, seed);
    }
    if (*trainc) {
      tf.cfg.seed = seed;
      return cmd_train(out, tf);
    }
    if (*reconc) {
      if (rf.problem.noise_seed == 0) rf.problem.noise_seed = seed;
      return cmd_reconstruct(out, rf);
    }
    if (*postc) {
      pf.cfg.seed = seed;
      if (pf.problem.noise_seed == 0) pf.problem.noise_seed = seed;
      return cmd_posterior(out, pf);
    }
    if (*synthc) return cmd_synthesize(out, sy_checkpoint, sy_samples, sy_steps, sy_zeta, sy_thin, seed);
    if (*evalc) return cmd_eval(out, ev_recon, ev_ref, ev_spline, ev_extras);
    if (*calc) {
      cf.seed = seed;
      return cmd_calibrate(out, cf);
    }
  } catch (const DivergenceError &e) {
    return emit_error(exit_numerical, "divergence", e.what(), out);
  } catch (const NpyError &e) {
    const int code = e.kind() == NpyError::Kind::io ? exit_missing_input : exit_bad_config;
    return emit_error(code, "input", e.what(), out);
  } catch (const std::invalid_argument &e) {
    return emit_error(exit_bad_config, "config", e.what(), out);
  } catch (const std::domain_error &e) {
    return emit_error(exit_numerical, "numerical", e.what(), out);
  } catch (const std::runtime_error &e) {
    const std::string what = e.what();
    if (what.find("backtracking") != std::string::npos)
      return emit_error(exit_numerical, "numerical", what, out);
    return emit_error(exit_internal, "internal", what, out);
  } catch (const std::exception &e) {
    return emit_error(exit_internal, "internal", e.what(), out);
  }
  return exit_internal;
}
