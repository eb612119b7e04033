#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pompkit {

/// Number of workers to use when the caller asks for "all cores".
inline unsigned default_workers() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1U : hc;
}

/// Runs fn(i) for i in [begin, end) on up to `workers` threads. Work items
/// must be independent; results may not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t begin, std::size_t end, unsigned workers, Fn&& fn) {
  const std::size_t count = end > begin ? end - begin : 0;
  if (workers <= 1 || count < 2) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  std::atomic<std::size_t> next{begin};
  std::exception_ptr error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < end; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
            next = end;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

/// Chunked variant for fine-grained loops (e.g. particles): fn(lo, hi).
template <typename Fn>
void parallel_chunks(std::size_t count, unsigned workers, std::size_t min_chunk, Fn&& fn) {
  if (workers <= 1 || count < 2 * min_chunk) {
    fn(std::size_t{0}, count);
    return;
  }
  const std::size_t chunks = std::min<std::size_t>(workers, count / min_chunk);
  const std::size_t size = (count + chunks - 1) / chunks;
  parallel_for(0, chunks, workers, [&](std::size_t c) {
    const std::size_t lo = c * size;
    const std::size_t hi = std::min(count, lo + size);
    if (lo < hi) fn(lo, hi);
  });
}

}  // namespace pompkit
