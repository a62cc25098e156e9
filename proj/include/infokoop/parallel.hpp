#pragma once

#include <cstddef>
#include <functional>

namespace infokoop {

// Worker count from KOOPMAN_IB_THREADS (0 or unset = hardware concurrency).
unsigned thread_count();

// Runs body(i) for i in [0, n) over up to thread_count() threads. Callers
// write results into per-index slots, so the outcome does not depend on
// scheduling. The first exception thrown by any body is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace infokoop
