#ifndef HISTOCUBE_PARALLEL_HPP
#define HISTOCUBE_PARALLEL_HPP

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace histocube {

/// Worker count from HISTOCUBE_THREADS, defaulting to one.
[[nodiscard]] inline unsigned default_threads() {
  if (const char* env = std::getenv("HISTOCUBE_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
  }
  return 1;
}

/// Runs body(begin, end) over contiguous chunks of [0, n) on up to `threads` workers.
/**
 * Chunk boundaries depend only on (n, threads); each index is visited by
 * exactly one worker. The first exception thrown by a worker is rethrown.
 */
template <typename Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
  if (workers <= 1) {
    if (n > 0) body(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = n * w / workers;
    const std::size_t end = n * (w + 1) / workers;
    pool.emplace_back([&, w, begin, end] {
      try {
        body(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace histocube

#endif  // HISTOCUBE_PARALLEL_HPP
