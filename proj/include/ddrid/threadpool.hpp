#pragma once

#include <cstdint>
#include <functional>

namespace ddrid {

// Worker count: DDRID_THREADS env var when set, hardware concurrency otherwise.
int worker_count();

// Runs fn(0..n_jobs-1) across the pool. Jobs must write disjoint data; job
// granularity is chosen by callers so results do not depend on worker count.
// Calls from inside a pool worker run inline (no nesting).
void parallel_for(int64_t n_jobs, const std::function<void(int64_t)>& fn);

}  // namespace ddrid
