#pragma once

#include <cstddef>
#include <functional>

namespace dygs {

/// Number of worker threads used by parallel loops. Reads DYGS_THREADS once;
/// falls back to the number of logical cores.
std::size_t worker_count();

/// Overrides the worker count for the rest of the process (tests use this).
void set_worker_count(std::size_t n);

/// Runs body(begin, end) over contiguous chunks of [0, n). Chunks are disjoint,
/// so bodies that only write to their own index range need no synchronization.
/// Chunk boundaries depend on `grain`, never on the worker count.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace dygs
