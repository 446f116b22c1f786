#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace blstab {

// Thread cap from BLSTAB_THREADS (default 1: serial). Work items write to
// disjoint slots, so scheduling cannot affect results.
inline int thread_cap() {
  if (const char* env = std::getenv("BLSTAB_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

inline void parallel_for(int count, const std::function<void(int)>& work) {
  const int threads = std::min(thread_cap(), count);
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) work(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (int i = t; i < count; i += threads) work(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace blstab
