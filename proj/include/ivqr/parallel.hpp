#pragma once

#include <cstddef>
#include <functional>

namespace ivqr {

// Worker count from IVQR_THREADS, else hardware concurrency (at least 1).
unsigned thread_count();

// Runs body(i) for i in [0, count). Each index is evaluated exactly once;
// callers store results by index so output never depends on scheduling. If any
// body throws, the exception from the lowest failing index is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace ivqr
