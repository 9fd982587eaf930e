#pragma once

#include <cstddef>
#include <functional>

namespace refsplat {

/// Number of worker threads used by parallel_for. Reads REFSPLAT_THREADS on
/// first use (0 or unset = hardware concurrency).
int thread_count();

/// Overrides the worker count for the rest of the process (0 = auto).
void set_thread_count(int n);

/// Runs body(i) for i in [0, n). Each index is visited exactly once; callers
/// must write only to storage owned by index i so results do not depend on
/// scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace refsplat
