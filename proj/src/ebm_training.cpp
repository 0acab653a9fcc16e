#include "ebmri/ebm_training.hpp"

#include "ebmri/parallel.hpp"

#include <cmath>
#include <fstream>

namespace ebmri {

int schedule_J(int update_index, int j_max) {
  if (update_index < 0) throw std::invalid_argument("update index must be >= 0");
  return static_cast<int>(std::ceil(j_max * (1.0 - std::exp(-update_index / 1000.0))));
}

double lr_at(const TrainConfig &cfg, int update_index) {
  double lr = cfg.lr;
  for (int s : cfg.lr_decay_steps)
    if (update_index >= s) lr *= cfg.lr_decay_rate;
  return lr;
}

RealGrid ula_chain(const RealGrid &x0,
                   const std::function<RealGrid(const RealGrid &)> &grad_energy, double zeta,
                   int steps, Rng &rng) {
  if (zeta <= 0.0) throw std::invalid_argument("ula step must be positive");
  RealGrid x = x0;
  const double noise = std::sqrt(zeta);
  for (int j = 0; j < steps; ++j) {
    const RealGrid g = grad_energy(x);
    if (!all_finite(g)) throw DivergenceError("non-finite energy gradient in ULA step " +
                                              std::to_string(j));
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] += -0.5 * zeta * g[i] + noise * rng.normal();
  }
  return x;
}

RealGrid ula_chain(const RealGrid &x0, const EbmParameters &p, const EbmArchitecture &arch,
                   double zeta, int steps, std::uint64_t seed) {
  Rng rng(seed);
  return ula_chain(
      x0, [&](const RealGrid &x) { return ebm_grad_input(x, p, arch); }, zeta, steps, rng);
}

ReplayBuffer::ReplayBuffer(int capacity) {
  if (capacity < 1) throw std::invalid_argument("buffer capacity must be >= 1");
  slots_.resize(static_cast<std::size_t>(capacity));
}

void ReplayBuffer::fill(const std::vector<RealGrid> &dataset, Rng &rng) {
  if (dataset.empty()) throw std::invalid_argument("cannot fill buffer from empty dataset");
  for (auto &slot : slots_) slot = dataset[rng.below(dataset.size())];
  occupancy_ = slots_.size();
}

std::size_t ReplayBuffer::draw_index(Rng &rng) const {
  if (occupancy_ == 0) throw std::logic_error("draw from an unfilled buffer");
  return rng.below(occupancy_);
}

void ReplayBuffer::writeback(std::size_t index, RealGrid chain_end,
                             const std::vector<RealGrid> &dataset, double pi_reinit, Rng &rng) {
  if (index >= occupancy_) throw std::out_of_range("buffer index");
  if (rng.uniform() < pi_reinit) {
    RealGrid fresh = dataset[rng.below(dataset.size())];
    if (rng.bernoulli(0.5)) {
      const auto perm = rng.permutation(static_cast<std::uint32_t>(fresh.size()));
      RealGrid shuffled(fresh.rows(), fresh.cols());
      for (std::size_t i = 0; i < fresh.size(); ++i) shuffled[i] = fresh[perm[i]];
      fresh = std::move(shuffled);
    }
    slots_[index] = std::move(fresh);
  } else {
    slots_[index] = std::move(chain_end);
  }
}

namespace {

struct BatchGrad {
  std::vector<double> grad; // mean over the batch
  double mean_energy = 0;
};

BatchGrad batch_param_grad(const EbmParameters &p, const EbmArchitecture &arch,
                           const std::vector<RealGrid> &batch) {
  const EbmLayout lo = ebm_layout(arch);
  const std::size_t n = batch.size();
  std::vector<EbmParameters> grads(n);
  std::vector<double> energies(n);
  parallel_for(n, [&](std::size_t i) {
    grads[i] = ebm_grad_params(batch[i], p, arch);
    energies[i] = ebm_value(batch[i], p, arch);
  });
  BatchGrad out;
  out.grad.assign(lo.total, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < lo.total; ++k) out.grad[k] += grads[i].flat[k];
    out.mean_energy += energies[i];
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (auto &g : out.grad) g *= inv;
  out.mean_energy *= inv;
  return out;
}

} // namespace

std::vector<double> ml_gradient(const EbmParameters &p, const EbmArchitecture &arch,
                                const std::vector<RealGrid> &data_batch,
                                const std::vector<RealGrid> &model_batch) {
  if (data_batch.empty() || model_batch.empty())
    throw std::invalid_argument("ml_gradient needs non-empty batches");
  const BatchGrad d = batch_param_grad(p, arch, data_batch);
  const BatchGrad m = batch_param_grad(p, arch, model_batch);
  std::vector<double> g(d.grad.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = d.grad[i] - m.grad[i];
  return g;
}

AdaBelief::AdaBelief(std::size_t n, double beta1, double beta2, double eps)
    : m_(n, 0.0), s_(n, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdaBelief::step(std::vector<double> &params, const std::vector<double> &grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw std::invalid_argument("optimizer size mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    const double r = grad[i] - m_[i];
    s_[i] = beta2_ * s_[i] + (1.0 - beta2_) * r * r;
    params[i] -= lr * (m_[i] / bc1) / (std::sqrt(s_[i] / bc2) + eps_);
  }
}

TrainResult train(const std::vector<RealGrid> &dataset, const EbmArchitecture &arch,
                  const TrainConfig &cfg,
                  const std::function<void(int, const EbmParameters &)> &checkpoint_cb) {
  if (dataset.empty()) throw std::invalid_argument("empty training dataset");
  for (const auto &d : dataset)
    if (d.rows() != arch.crop_rows || d.cols() != arch.crop_cols)
      throw std::invalid_argument("dataset samples must match the crop shape");

  Rng master(cfg.seed);
  TrainResult result;
  result.theta = EbmParameters::random_init(arch, master);
  const EbmLayout lo = ebm_layout(arch);
  AdaBelief opt(lo.total, cfg.beta1, cfg.beta2, cfg.adam_eps);

  ReplayBuffer buffer(cfg.buffer_capacity);
  {
    Rng fill_rng = master.fork(0);
    buffer.fill(dataset, fill_rng);
  }

  // Stream ids: one block per update, sub-streams for data draw, buffer
  // bookkeeping and the per-chain Langevin noise.
  const auto stream = [](int h, int purpose, int chain) {
    return (static_cast<std::uint64_t>(h) << 24) | (static_cast<std::uint64_t>(purpose) << 20) |
           static_cast<std::uint64_t>(chain);
  };

  for (int h = 0; h < cfg.total_updates; ++h) {
    const int J = schedule_J(h, cfg.ula_steps_max);
    const double lr = lr_at(cfg, h);

    Rng data_rng = master.fork(stream(h, 1, 0));
    std::vector<RealGrid> data_batch;
    data_batch.reserve(cfg.batch);
    for (int b = 0; b < cfg.batch; ++b) {
      RealGrid x = dataset[data_rng.below(dataset.size())];
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += cfg.data_noise_std * data_rng.normal();
      data_batch.push_back(std::move(x));
    }

    Rng buf_rng = master.fork(stream(h, 2, 0));
    std::vector<std::size_t> indices(cfg.batch);
    std::vector<RealGrid> model_batch(cfg.batch);
    for (int b = 0; b < cfg.batch; ++b) {
      indices[b] = buffer.draw_index(buf_rng);
      model_batch[b] = buffer.at(indices[b]);
    }

    parallel_for(model_batch.size(), [&](std::size_t b) {
      Rng chain_rng = master.fork(stream(h, 3, static_cast<int>(b)));
      model_batch[b] = ula_chain(
          model_batch[b],
          [&](const RealGrid &x) { return ebm_grad_input(x, result.theta, arch); },
          cfg.ula_step, J, chain_rng);
    });

    const BatchGrad d = batch_param_grad(result.theta, arch, data_batch);
    const BatchGrad m = batch_param_grad(result.theta, arch, model_batch);
    std::vector<double> g(lo.total);
    double gnorm = 0;
    for (std::size_t i = 0; i < lo.total; ++i) {
      g[i] = d.grad[i] - m.grad[i];
      gnorm += g[i] * g[i];
    }
    gnorm = std::sqrt(gnorm);

    if (!std::isfinite(d.mean_energy) || !std::isfinite(m.mean_energy) ||
        std::abs(d.mean_energy) > cfg.energy_abort || std::abs(m.mean_energy) > cfg.energy_abort)
      throw DivergenceError("training diverged at update " + std::to_string(h) +
                            " (data energy " + std::to_string(d.mean_energy) + ", model energy " +
                            std::to_string(m.mean_energy) + ")");

    opt.step(result.theta.flat, g, lr);

    Rng wb_rng = master.fork(stream(h, 4, 0));
    for (int b = 0; b < cfg.batch; ++b)
      buffer.writeback(indices[b], std::move(model_batch[b]), dataset, cfg.pi_reinit, wb_rng);

    result.log.push_back({h, J, lr, d.mean_energy, m.mean_energy, gnorm});
    if (checkpoint_cb && cfg.checkpoint_every > 0 && (h + 1) % cfg.checkpoint_every == 0)
      checkpoint_cb(h + 1, result.theta);
  }
  if (checkpoint_cb) checkpoint_cb(cfg.total_updates, result.theta);
  return result;
}

void write_train_log_csv(const std::vector<TrainLogRow> &log, const std::string &path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write log: " + path);
  f << "update,J,lr,data_energy,model_energy,grad_norm\n";
  for (const auto &row : log)
    f << row.update << ',' << row.ula_steps << ',' << row.lr << ',' << row.data_energy << ','
      << row.model_energy << ',' << row.grad_norm << '\n';
}

} // namespace ebmri
