#pragma once

#include <cstddef>
#include <functional>

namespace avglemma {

/// Worker count used by data-parallel sweeps. 0 means hardware concurrency.
void set_thread_count(int n);
int thread_count();

/// Calls body(i) for i in [0, n). Indices are split into contiguous blocks,
/// one per worker; callers write results by index and reduce afterwards, so
/// outputs do not depend on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace avglemma
