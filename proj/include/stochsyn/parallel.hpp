#pragma once

#include <cstddef>
#include <functional>

namespace stochsyn {

/// Worker count: STOCHSYN_THREADS if set and positive, else the hardware
/// concurrency (at least 1).
std::size_t worker_count();

/// Calls body(begin, end) on disjoint contiguous chunks of [0, count).
/// Exceptions from any chunk are rethrown on the calling thread.
void parallel_for(std::size_t count, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace stochsyn
