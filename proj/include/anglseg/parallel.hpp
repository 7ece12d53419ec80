#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace anglseg {

/// Worker cap: ANGLSEG_THREADS if set and positive, else hardware concurrency.
inline std::size_t worker_count() {
  if (const char* env = std::getenv("ANGLSEG_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Calls fn(i) for i in [begin, end) over contiguous chunks. fn must only
/// write state owned by index i. The first exception thrown by any worker
/// is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t begin, std::size_t end, Fn&& fn) {
  if (end <= begin) return;
  const auto n = end - begin;
  const auto workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (auto i = begin; i < end; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_lock;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    const auto chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const auto lo = begin + w * chunk;
      const auto hi = std::min(end, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back([lo, hi, &fn, &failure, &failure_lock] {
        try {
          for (auto i = lo; i < hi; ++i) fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> g(failure_lock);
          if (!failure) failure = std::current_exception();
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace anglseg
