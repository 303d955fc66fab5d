#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace nhdiff {

// Thread count from NHDIFF_THREADS, defaulting to 1.
inline int default_threads() {
  if (const char* s = std::getenv("NHDIFF_THREADS")) {
    const int n = std::atoi(s);
    if (n > 0) return n;
  }
  return 1;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers with static contiguous
// chunks. Callers write results by index, so output never depends on scheduling.
inline void parallel_for(long n, int threads, const std::function<void(long)>& fn) {
  threads = std::max(1, std::min<int>(threads, static_cast<int>(std::max<long>(n, 1))));
  if (threads == 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr err;
  std::mutex m;
  std::vector<std::thread> pool;
  const long chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const long lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&, lo, hi] {
      try {
        for (long i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> g(m);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace nhdiff
