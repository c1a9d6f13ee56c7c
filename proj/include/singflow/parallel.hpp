#pragma once

#include <functional>

namespace singflow {

/// Thread count from the SINGFLOW_THREADS environment variable when set and
/// positive, otherwise the hardware concurrency (at least 1).
int default_thread_count();

/// Runs fn(i) for i in [0, n) on up to `threads` workers with a static block
/// partition. Results must be written to caller-owned slots indexed by i, so
/// the outcome is identical for every thread count. The first exception
/// thrown by any worker is rethrown on the calling thread after the join.
void parallel_for(long n, int threads, const std::function<void(long)>& fn);

}  // namespace singflow
