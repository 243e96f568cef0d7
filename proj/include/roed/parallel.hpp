#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace roed {

inline int default_workers() {
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs body(i) for i in [0, n) on up to `workers` threads. Indices are handed
// out dynamically; the first exception thrown is rethrown on the caller.
template <class Body>
void parallel_for(int n, int workers, Body&& body) {
  workers = std::clamp(workers, 1, std::max(n, 1));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (int w = 1; w < workers; ++w) pool.emplace_back(run);
  run();
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace roed
