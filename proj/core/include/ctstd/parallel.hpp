#pragma once

#include <cstdint>
#include <functional>

namespace ctstd {

/// Worker count: CTSTD_THREADS if set (clamped to [1, 64]), else the
/// hardware concurrency. Read once per process.
int thread_cap();

/// Runs fn(begin, end) over a static partition of [0, n). Work items must
/// write to disjoint locations; there are no cross-thread reductions, so
/// results are independent of the worker count. Nested calls run inline on
/// the calling worker.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace ctstd
