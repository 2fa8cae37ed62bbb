#pragma once

#include <cstddef>
#include <functional>

namespace flap {

// Upper bound on worker threads used by parallel_for. Defaults to 1.
void set_max_threads(std::size_t n);
std::size_t max_threads();

// Calls fn(i) for i in [0, n). Work is split into contiguous chunks; callers
// write results into per-index slots and reduce afterwards in index order, so
// output never depends on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace flap
