#pragma once

#include <cstddef>
#include <functional>

namespace dhm {

// Worker count: DHM_THREADS if set to a positive integer, else the hardware concurrency.
int thread_count();

// Calls body(i) for i in [0, n), split into contiguous blocks across threads.
// Each index must write only its own output slot.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace dhm
