#pragma once

#include <cstddef>
#include <functional>

namespace gradlab {

// Worker count: GRADLAB_THREADS if set and positive, otherwise hardware concurrency.
std::size_t worker_count();

// Runs body(i) for i in [0, n). Each index is visited exactly once; callers
// write results by index so the outcome does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace gradlab
