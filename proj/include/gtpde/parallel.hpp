#pragma once

#include <cstddef>
#include <functional>

namespace gtpde {

// Worker count: GTPDE_THREADS if set (>= 1), else hardware concurrency.
std::size_t thread_count();

// Runs body(i) for i in [0, n) over thread_count() workers with static
// contiguous chunks. body must not touch shared mutable state.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace gtpde
