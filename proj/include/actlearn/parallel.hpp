#pragma once

#include <cstddef>
#include <exception>
#include <functional>

namespace actlearn {

// Runs fn(i) for i in [0, count) across up to `threads` workers (0 = one per
// hardware thread). Blocks until done; the first exception thrown by any
// worker is rethrown. Work items must not share mutable state.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn,
                  int threads = 0);

} // namespace actlearn
