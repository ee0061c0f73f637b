#pragma once

#include <cstdint>
#include <functional>

namespace stm {

// Worker count: min(hardware, STM_THREADS env) unless an explicit cap is given.
int thread_count(int requested = 0);

// Runs fn(begin, end) over contiguous chunks of [begin, end), one chunk per
// worker. Chunking depends only on (range, threads), so per-chunk reductions
// folded in index order are reproducible for a fixed thread count.
void parallel_for(int64_t begin, int64_t end,
                  const std::function<void(int64_t, int64_t)>& fn,
                  int threads = 0);

// Same, with the worker's index (0 <= w < thread_count(threads)) so callers
// can keep per-worker accumulation buffers.
void parallel_for_indexed(int64_t begin, int64_t end,
                          const std::function<void(int, int64_t, int64_t)>& fn,
                          int threads = 0);

}  // namespace stm
