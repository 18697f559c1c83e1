#pragma once

#include <cstddef>
#include <functional>

namespace featdec {

/// Worker count: FEATDEC_THREADS if set to a positive integer, else the
/// hardware concurrency (at least 1).
std::size_t thread_count();

/// Calls body(begin, end) on disjoint contiguous chunks covering [0, n).
/// Each index is visited exactly once, so bodies writing to distinct slots
/// give results independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk = 256);

}  // namespace featdec
