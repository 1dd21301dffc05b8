#pragma once

#include <cstddef>
#include <functional>

namespace depthforge {

/// Worker cap: DEPTHFORGE_THREADS if set and positive, else hardware
/// concurrency (at least 1).
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Each index
/// must write only its own output slot; the first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace depthforge
