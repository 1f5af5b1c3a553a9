#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace confocal {

namespace detail {
inline std::atomic<int>& thread_budget() {
  static std::atomic<int> n{1};
  return n;
}
}  // namespace detail

/// Upper bound on worker threads used inside library calls (CLI `--threads`).
inline void set_thread_count(int n) { detail::thread_budget().store(std::max(1, n)); }
inline int thread_count() { return detail::thread_budget().load(); }

// Runs fn(i) for i in [begin, end). Each index must write only its own outputs, so the
// result does not depend on the number of threads.
template <typename Fn>
void parallel_for(std::ptrdiff_t begin, std::ptrdiff_t end, Fn&& fn) {
  const std::ptrdiff_t count = end - begin;
  const int workers = static_cast<int>(std::min<std::ptrdiff_t>(thread_count(), count));
  if (workers <= 1) {
    for (std::ptrdiff_t i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::ptrdiff_t chunk = (count + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::ptrdiff_t lo = begin + w * chunk;
    const std::ptrdiff_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::ptrdiff_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace confocal
