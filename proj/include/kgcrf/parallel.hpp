#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace kgcrf {

// Worker cap from KGCRF_THREADS (>= 1), else the hardware concurrency.
inline std::size_t worker_count() {
  if (const char* env = std::getenv("KGCRF_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n >= 1) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

// Calls body(begin, end) over a static partition of [0, n). Each index is
// visited by exactly one worker, so bodies that only write their own slots
// produce results independent of the worker count.
template <typename Body>
void parallel_for(std::size_t n, Body&& body, std::size_t min_chunk = 8) {
  const std::size_t workers = std::min(worker_count(), std::max<std::size_t>(1, n / min_chunk));
  if (workers <= 1) {
    body(std::size_t{0}, n);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
  body(std::size_t{0}, std::min(n, chunk));
}

}  // namespace kgcrf
