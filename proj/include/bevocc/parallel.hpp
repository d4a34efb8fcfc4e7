#pragma once

#include <cstdint>
#include <functional>

namespace bevocc {

// Global worker count for kernel-internal parallelism. 1 (the default) runs
// everything inline. Kernels only parallelize loops whose iterations write
// disjoint outputs, so results are bit-identical at any thread count.
void set_thread_count(int n);
int thread_count();

// Runs fn(i) for i in [begin, end), partitioned into contiguous chunks.
void parallel_for(int64_t begin, int64_t end, const std::function<void(int64_t)>& fn);

}  // namespace bevocc
