#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace gnice {

/// Splits [0, n) into contiguous chunks, one per worker, and runs
/// `body(begin, end, worker)` on each. threads <= 1 runs inline. The first
/// exception thrown by any worker is rethrown after all workers join.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t, std::size_t, int)>& body) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n < 2) {
    body(0, n, 0);
    return;
  }
  const std::size_t used = std::min(workers, n);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(used);
  pool.reserve(used);
  for (std::size_t w = 0; w < used; ++w) {
    const std::size_t begin = n * w / used;
    const std::size_t end = n * (w + 1) / used;
    pool.emplace_back([&, begin, end, w] {
      try {
        body(begin, end, static_cast<int>(w));
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace gnice
