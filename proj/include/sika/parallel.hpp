#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace sika {

/// Runs fn(begin, end) over contiguous chunks of [0, n). Chunk boundaries depend only on n and
/// threads, so results written to disjoint outputs are reproducible.
template <typename Fn> void parallel_for(std::ptrdiff_t n, int threads, Fn &&fn) {
  const std::ptrdiff_t workers = std::clamp<std::ptrdiff_t>(threads, 1, std::max<std::ptrdiff_t>(n, 1));
  if (workers == 1) {
    fn(std::ptrdiff_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const std::ptrdiff_t chunk = (n + workers - 1) / workers;
  for (std::ptrdiff_t begin = 0; begin < n; begin += chunk) {
    pool.emplace_back([&fn, begin, end = std::min(n, begin + chunk)] { fn(begin, end); });
  }
  for (auto &t : pool) {
    t.join();
  }
}

} // namespace sika
