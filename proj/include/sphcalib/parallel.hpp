#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace sphcalib {

/// Worker count: explicit request if positive, else CALIB_THREADS, else the
/// hardware concurrency.
inline int resolve_threads(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CALIB_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(begin, end) over `chunks` contiguous, disjoint slices of
/// [0, count). Slice boundaries depend only on count and chunks, never on
/// scheduling. The first exception thrown by any slice is rethrown.
inline void parallel_for_chunks(std::size_t count, int threads,
                                const std::function<void(std::size_t, std::size_t)>& body) {
  if (count == 0) return;
  const std::size_t n = std::min<std::size_t>(std::max(1, threads), count);
  if (n == 1) {
    body(0, count);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::jthread> workers;
  workers.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t begin = count * t / n;
    const std::size_t end = count * (t + 1) / n;
    workers.emplace_back([&, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  workers.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace sphcalib
