#pragma once

#include <cstddef>
#include <functional>

namespace dml {

// Worker count: the DMLE_THREADS environment variable when set (clamped to at
// least 1), otherwise the hardware concurrency.
std::size_t thread_budget();

// Runs fn(i) for i in [0, n) over a static partition of the index range.
// Results must be written to per-index slots; the partition never changes a
// computed value, only who computes it.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace dml
