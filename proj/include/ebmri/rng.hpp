#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace ebmri {

/// Deterministic pseudo-random stream built on splitmix64.  Self-contained so
/// that results are byte-identical across standard libraries; std
/// distributions are implementation-defined and would break that.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t bits() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(bits() >> 11) + 1.0) * 0x1.0p-53; // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }

  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = bits();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::vector<std::uint32_t> permutation(std::uint32_t n) {
    std::vector<std::uint32_t> p(n);
    for (std::uint32_t i = 0; i < n; ++i) p[i] = i;
    for (std::uint32_t i = n; i > 1; --i) {
      const auto j = static_cast<std::uint32_t>(below(i));
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

  /// Derives an independent stream from the current state without consuming
  /// from it.  Used to split per-chain streams so that batch results do not
  /// depend on thread scheduling.
  Rng fork(std::uint64_t stream) const {
    Rng r(state_ ^ 0xd1b54a32d192ed03ULL);
    r.state_ += (stream + 1) * 0x2545f4914f6cdd1dULL;
    r.state_ = r.peek_mix();
    return r;
  }

private:
  std::uint64_t peek_mix() const {
    std::uint64_t z = state_ + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

} // namespace ebmri
