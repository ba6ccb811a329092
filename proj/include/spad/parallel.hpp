// Chunked parallel-for over an index range. Work items must write to disjoint
// locations; outputs are then identical for any thread count.
#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace spad {

inline void parallel_for(std::int64_t n, int threads,
                         const std::function<void(std::int64_t, std::int64_t)>& chunk) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    chunk(0, n);
    return;
  }
  int nthreads = std::min<std::int64_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  std::int64_t per = (n + nthreads - 1) / nthreads;
  for (int t = 0; t < nthreads; ++t) {
    std::int64_t lo = t * per;
    std::int64_t hi = std::min(n, lo + per);
    if (lo >= hi) break;
    pool.emplace_back(chunk, lo, hi);
  }
  for (auto& th : pool) th.join();
}

}  // namespace spad
