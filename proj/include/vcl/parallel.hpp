#pragma once

#include <cstddef>
#include <functional>

namespace vcl {

/// Worker count: VCL_THREADS if set (>= 1), otherwise hardware concurrency.
std::size_t worker_count();

/// Calls fn(i) for i in [0, n) on up to worker_count() threads. Callers write
/// results into slot i so output order never depends on scheduling. The first
/// exception thrown by any task is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace vcl
