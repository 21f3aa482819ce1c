#pragma once

#include <cstddef>
#include <functional>

namespace deconvparse {

// Worker pool size: DECONVPARSE_THREADS if set (>=1), else hardware threads.
std::size_t worker_count();

// Runs fn(0..n-1) across the worker pool. Results must be written to
// per-index slots; iteration order is unspecified but the set is exact,
// so deterministic outputs only require per-index purity.
// The first exception thrown by any job is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace deconvparse
