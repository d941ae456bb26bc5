#pragma once

#include <cstddef>
#include <functional>

namespace terraclust {

/// Number of worker threads to use. 0 picks hardware_concurrency.
/// Set once at startup by the CLI; library code reads it via thread_count().
void set_thread_count(int n);
int thread_count();

/// Runs fn(i) for i in [0, n) across worker threads in fixed contiguous
/// chunks. Each index must write only to its own output slots, which makes
/// the result independent of the worker count. Exceptions from workers are
/// rethrown on the calling thread.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

/// Chunked variant: fn(begin, end) over disjoint ranges.
void parallel_for_chunks(size_t n, size_t chunk,
                         const std::function<void(size_t, size_t)>& fn);

}  // namespace terraclust
