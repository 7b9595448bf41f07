// Chunked parallel_for over an index range.
//
// Every task writes a disjoint slice of the output and each output element is
// accumulated by a single sequential loop, so results are bit-identical to the
// serial execution regardless of thread count.
#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <thread>
#include <vector>

namespace partsnet {

inline std::atomic<int>& num_threads_setting() {
  static std::atomic<int> n{0};  // 0 = auto
  return n;
}

inline void set_num_threads(int n) { num_threads_setting().store(n); }

inline int num_threads() {
  int n = num_threads_setting().load();
  if (n > 0) return n;
  unsigned hc = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(hc, 1u, 8u));
}

template <typename F>
void parallel_for(std::int64_t begin, std::int64_t end, F&& body) {
  const std::int64_t count = end - begin;
  if (count <= 0) return;
  int threads = std::min<std::int64_t>(num_threads(), count);
  if (threads <= 1) {
    for (std::int64_t i = begin; i < end; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  const std::int64_t chunk = (count + threads - 1) / threads;
  auto run = [&body](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) body(i);
  };
  for (int t = 1; t < threads; ++t) {
    std::int64_t lo = begin + t * chunk;
    std::int64_t hi = std::min(end, lo + chunk);
    if (lo < hi) pool.emplace_back(run, lo, hi);
  }
  run(begin, std::min(end, begin + chunk));
  for (auto& th : pool) th.join();
}

}  // namespace partsnet
