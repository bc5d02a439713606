#pragma once

#include <functional>

namespace fuselab {

/// Worker cap: FUSELAB_THREADS if set (>= 1), else the hardware count.
int worker_threads();

/// Calls fn(i) for i in [0, n) on up to worker_threads() threads. Each index
/// runs exactly once; the first exception is rethrown after all workers join.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace fuselab
