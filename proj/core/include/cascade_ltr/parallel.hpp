#pragma once

#include <cstddef>
#include <functional>

namespace cascade_ltr {

// CASCADE_LTR_THREADS when set to a positive integer, otherwise the number
// of hardware threads (at least 1).
std::size_t default_thread_count();

// Runs body(i) for i in [0, count) on up to `threads` threads. Each index is
// processed exactly once; callers write results into per-index slots so the
// outcome does not depend on scheduling. The exception from the lowest
// failing index is rethrown.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace cascade_ltr
