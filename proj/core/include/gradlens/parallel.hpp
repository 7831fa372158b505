#pragma once

#include <cstddef>
#include <functional>

namespace gradlens {

// Worker count: GRADLENS_THREADS if set to a positive integer, otherwise the
// hardware concurrency (at least 1).
std::size_t thread_count();

// Runs fn(i) for i in [0, n) on up to thread_count() threads. fn must be safe
// to call concurrently for distinct i. The first exception thrown by any call
// is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace gradlens
