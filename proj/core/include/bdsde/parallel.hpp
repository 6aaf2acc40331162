#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace bdsde {

/// Resolve a thread-count request: 0 means "auto".
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Run fn(i) for i in [0, count). Work is split into contiguous blocks so
/// writes to disjoint slots stay deterministic regardless of scheduling.
template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  threads = resolve_threads(threads);
  if (threads <= 1 || count < 2048) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t nblocks = static_cast<std::size_t>(threads);
  std::vector<std::thread> pool;
  pool.reserve(nblocks);
  const std::size_t chunk = (count + nblocks - 1) / nblocks;
  std::exception_ptr error;
  std::atomic_flag error_set = ATOMIC_FLAG_INIT;
  for (std::size_t b = 0; b < nblocks; ++b) {
    const std::size_t lo = b * chunk;
    if (lo >= count) break;
    const std::size_t hi = std::min(count, lo + chunk);
    pool.emplace_back([lo, hi, &fn, &error, &error_set] {
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        if (!error_set.test_and_set()) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace bdsde
