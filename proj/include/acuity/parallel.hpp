#pragma once

#include <cstddef>
#include <functional>

namespace acuity {

/// Worker cap: ACUR_THREADS if set to a positive integer, else the hardware
/// concurrency (at least 1).
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Each index
/// runs exactly once; callers write results by index so the outcome does not
/// depend on scheduling. The first exception thrown by any body is rethrown.
/// Calls made from inside a body run serially on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace acuity
