#pragma once

#include <cstddef>
#include <functional>

namespace lulc {

/// Number of hardware threads, at least 1.
int default_threads();

/// Splits [0, n) into at most `threads` contiguous chunks and runs
/// fn(chunk, begin, end) for each, the first on the calling thread. Chunk
/// boundaries depend only on n and threads. The first exception thrown by
/// any chunk is rethrown after all chunks finish.
void parallel_chunks(std::size_t n, int threads,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

/// Number of chunks parallel_chunks will use.
std::size_t chunk_count(std::size_t n, int threads);

}  // namespace lulc
