#pragma once

#include "ebmri/grid.hpp"
#include "ebmri/regularizers.hpp"
#include "ebmri/rng.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ebmri {

/// Raised when energies blow up and the run aborts.
class DivergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double lr = 5e-4;
  std::vector<int> lr_decay_steps = {500, 2000, 3000, 5000, 7000};
  double lr_decay_rate = 0.5;
  int batch = 50;
  int total_updates = 27000;
  int ula_steps_max = 500; // J_max
  // The Langevin step is not stated by the training recipe; by default one
  // step's noise scale matches the data smoothing noise: zeta = 2 sigma^2.
  double ula_step = 2.0 * 1.5e-2 * 1.5e-2;
  double pi_reinit = 0.01;
  double data_noise_std = 1.5e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int buffer_capacity = 8000;
  double energy_abort = 1e8;
  int checkpoint_every = 0; // 0 = final checkpoint only
  std::uint64_t seed = 0;
};

/// ceil(J_max (1 - exp(-h/1000))).
int schedule_J(int update_index, int j_max);

/// Learning rate after the staged decay, cumulative over passed steps.
double lr_at(const TrainConfig &cfg, int update_index);

/// Unadjusted Langevin iteration x <- x - (zeta/2) grad E(x) + sqrt(zeta) n,
/// no Metropolis correction.  Aborts with DivergenceError on non-finite
/// gradients.
RealGrid ula_chain(const RealGrid &x0,
                   const std::function<RealGrid(const RealGrid &)> &grad_energy, double zeta,
                   int steps, Rng &rng);

/// ULA under the learned energy, deterministic in the seed.
RealGrid ula_chain(const RealGrid &x0, const EbmParameters &p, const EbmArchitecture &arch,
                   double zeta, int steps, std::uint64_t seed);

/// Persistent-initialization buffer for the model chains.
class ReplayBuffer {
public:
  explicit ReplayBuffer(int capacity);

  std::size_t capacity() const { return slots_.size(); }
  std::size_t occupancy() const { return occupancy_; }

  /// Cold start: fills every slot with dataset samples.
  void fill(const std::vector<RealGrid> &dataset, Rng &rng);

  std::size_t draw_index(Rng &rng) const;
  const RealGrid &at(std::size_t i) const { return slots_[i]; }

  /// Stores the chain end with probability 1 - pi_reinit; otherwise stores a
  /// fresh dataset sample whose pixels are permuted with an independent fair
  /// coin.
  void writeback(std::size_t index, RealGrid chain_end, const std::vector<RealGrid> &dataset,
                 double pi_reinit, Rng &rng);

private:
  std::vector<RealGrid> slots_;
  std::size_t occupancy_ = 0;
};

/// Maximum-likelihood direction: E_data[grad_theta R] - E_model[grad_theta R].
std::vector<double> ml_gradient(const EbmParameters &p, const EbmArchitecture &arch,
                                const std::vector<RealGrid> &data_batch,
                                const std::vector<RealGrid> &model_batch);

/// First moment of the gradient, second moment of the gradient-minus-first-
/// moment residual, bias-corrected.
class AdaBelief {
public:
  AdaBelief(std::size_t n, double beta1, double beta2, double eps);
  void step(std::vector<double> &params, const std::vector<double> &grad, double lr);

private:
  std::vector<double> m_, s_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

struct TrainLogRow {
  int update = 0;
  int ula_steps = 0;
  double lr = 0;
  double data_energy = 0;
  double model_energy = 0;
  double grad_norm = 0;
};

struct TrainResult {
  EbmParameters theta;
  std::vector<TrainLogRow> log;
};

/// Full training loop.  checkpoint_cb, when set, receives (update, theta) at
/// the configured cadence and once at the end.
TrainResult train(const std::vector<RealGrid> &dataset, const EbmArchitecture &arch,
                  const TrainConfig &cfg,
                  const std::function<void(int, const EbmParameters &)> &checkpoint_cb = {});

void write_train_log_csv(const std::vector<TrainLogRow> &log, const std::string &path);

} // namespace ebmri
