#include "darkmix/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace darkmix {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DARKMIX_THREADS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) return parsed;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::size_t chunk_count(std::size_t n_items) {
  return (n_items + kChunkSize - 1) / kChunkSize;
}

void parallel_chunks(std::size_t n_items, int threads,
                     const std::function<void(std::size_t, std::size_t,
                                              std::size_t)>& fn) {
  const std::size_t n_chunks = chunk_count(n_items);
  if (n_chunks == 0) return;

  const int workers =
      static_cast<int>(std::min<std::size_t>(resolve_threads(threads), n_chunks));
  if (workers <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) {
      const std::size_t begin = c * kChunkSize;
      fn(c, begin, std::min(begin + kChunkSize, n_items));
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      try {
        for (;;) {
          const std::size_t c = next.fetch_add(1);
          if (c >= n_chunks || failed.load(std::memory_order_relaxed)) break;
          const std::size_t begin = c * kChunkSize;
          fn(c, begin, std::min(begin + kChunkSize, n_items));
        }
      } catch (...) {
        if (!failed.exchange(true)) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace darkmix
