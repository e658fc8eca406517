#pragma once

#include <cstdint>
#include <functional>

namespace logonet {

// Worker count used by data-parallel kernels. 1 means everything runs on the
// calling thread. Kernels only split work whose results are written to
// disjoint locations and reduce partial sums in a fixed order, so outputs do
// not depend on this setting.
void set_num_threads(int threads);
int num_threads();

// Runs body(i) for i in [0, count). Blocks until all calls return; the first
// exception thrown by any call is rethrown.
void parallel_for(int64_t count, const std::function<void(int64_t)>& body);

}  // namespace logonet
