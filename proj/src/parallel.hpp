#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace spinesim::detail {

/// Runs fn(i) for i in [0, n) across hardware threads. Each index is
/// processed exactly once, so results written per index are deterministic.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  const int workers = std::clamp(static_cast<int>(std::thread::hardware_concurrency()), 1, 32);
  if (workers == 1 || n < 2) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < n; i += workers) fn(i);
    });
  }
}

}  // namespace spinesim::detail
