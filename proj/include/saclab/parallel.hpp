#pragma once
#include <cstddef>
#include <functional>

namespace saclab {

/// Worker count: SAC_LAB_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Each task owns
/// its output slot, so results do not depend on scheduling. The first
/// exception thrown by a task is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

} // namespace saclab
