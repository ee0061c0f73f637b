#include "stm/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace stm {

int thread_count(int requested) {
  if (requested > 0) return requested;
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 0) hw = 1;
  if (const char* env = std::getenv("STM_THREADS")) {
    int cap = std::atoi(env);
    if (cap > 0) hw = std::min(hw, cap);
  }
  return hw;
}

void parallel_for_indexed(int64_t begin, int64_t end,
                          const std::function<void(int, int64_t, int64_t)>& fn,
                          int threads) {
  const int64_t n = end - begin;
  if (n <= 0) return;
  int workers = thread_count(threads);
  workers = static_cast<int>(std::min<int64_t>(workers, n));
  if (workers <= 1) {
    fn(0, begin, end);
    return;
  }
  const int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    int64_t lo = begin + w * chunk;
    int64_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, w, lo, hi] { fn(w, lo, hi); });
  }
  for (auto& t : pool) t.join();
}

void parallel_for(int64_t begin, int64_t end,
                  const std::function<void(int64_t, int64_t)>& fn,
                  int threads) {
  parallel_for_indexed(begin, end,
                       [&fn](int, int64_t lo, int64_t hi) { fn(lo, hi); },
                       threads);
}

}  // namespace stm
