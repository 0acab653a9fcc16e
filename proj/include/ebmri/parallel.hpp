#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace ebmri {

/// Runs fn(i) for i in [0, n) across hardware threads.  Callers must ensure
/// iterations write disjoint state; outputs are then independent of the
/// degree of parallelism.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)> &fn) {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw < 2 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(hw, n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto &t : pool) t.join();
}

} // namespace ebmri
