#pragma once

#include <cstddef>
#include <functional>

namespace dggx {

/// Number of worker threads used inside ops. Default 1, the mode in which
/// every result is bit-reproducible across runs.
void set_thread_count(std::size_t threads);
std::size_t thread_count();

/// Splits [0, n) into at most thread_count() contiguous chunks and runs
/// `body(chunk, begin, end)` for each, concurrently when more than one.
/// The chunk layout depends only on n and the thread count, so callers that
/// reduce per-chunk partials in chunk order stay deterministic.
void parallel_chunks(std::size_t n,
                     const std::function<void(std::size_t chunk, std::size_t begin,
                                              std::size_t end)>& body);

/// Number of chunks parallel_chunks(n, ...) will use.
std::size_t chunk_count(std::size_t n);

}  // namespace dggx
