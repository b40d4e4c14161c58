#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace wfen {

// Worker cap for data-parallel loops, taken from WFEN_THREADS (default 1).
// Every output element is owned by exactly one worker and accumulated in a
// fixed order, so results are bit-identical for any cap.
inline int& thread_cap() {
  static int cap = [] {
    if (const char* env = std::getenv("WFEN_THREADS")) {
      const int v = std::atoi(env);
      if (v >= 1) return v;
    }
    return 1;
  }();
  return cap;
}

inline void set_thread_cap(int n) { thread_cap() = std::max(1, n); }

template <typename F>
void parallel_for(int64_t n, F&& body) {
  const int cap = thread_cap();
  if (cap <= 1 || n < 2) {
    body(int64_t(0), n);
    return;
  }
  const int workers = static_cast<int>(std::min<int64_t>(cap, n));
  const int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int t = 0; t < workers; ++t) {
    const int64_t lo = t * chunk;
    const int64_t hi = std::min<int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace wfen
