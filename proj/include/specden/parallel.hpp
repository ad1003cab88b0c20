#pragma once

#include <algorithm>
#include <cstdlib>
#include <cstdint>
#include <thread>
#include <vector>

namespace specden {

/// Worker count used by parallel_for. Resolution order:
/// SPECDEN_THREADS environment variable (0 or unset = auto), then
/// hardware concurrency. Always at least 1.
inline int worker_count() {
  long requested = 0;
  if (const char* env = std::getenv("SPECDEN_THREADS")) {
    requested = std::strtol(env, nullptr, 10);
  }
  if (requested <= 0) {
    requested = static_cast<long>(std::thread::hardware_concurrency());
  }
  return static_cast<int>(std::max(1L, requested));
}

/// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, one
/// per worker. fn must not mutate state shared across indices; under that
/// contract the result is identical for any worker count.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
  if (n <= 0) return;
  const int workers = static_cast<int>(std::min<std::int64_t>(worker_count(), n));
  if (workers <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::int64_t chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::int64_t lo = w * chunk;
    const std::int64_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

} // namespace specden
