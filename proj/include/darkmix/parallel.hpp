#pragma once

#include <cstddef>
#include <functional>

namespace darkmix {

/// Pixels are processed in fixed-size chunks whose boundaries do not depend
/// on the thread count; callers store per-chunk partial results and combine
/// them in chunk order. That makes every reduction bit-identical whether it
/// runs on 1 thread or 64.
constexpr std::size_t kChunkSize = 1024;

/// Resolve a requested worker count: 0 means "DARKMIX_THREADS if set, else
/// hardware concurrency".
int resolve_threads(int requested);

std::size_t chunk_count(std::size_t n_items);

/// Run fn(chunk_index, begin, end) over all chunks of [0, n_items), using at
/// most `threads` workers. fn must only write to chunk-private storage.
void parallel_chunks(std::size_t n_items, int threads,
                     const std::function<void(std::size_t, std::size_t,
                                              std::size_t)>& fn);

}  // namespace darkmix
