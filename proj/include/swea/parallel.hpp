#pragma once

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace swea {

/// Worker count: SWEA_THREADS when set (>=1), otherwise hardware concurrency.
inline unsigned thread_budget() {
  if (const char* env = std::getenv("SWEA_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<unsigned>(n);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

/// Runs fn(i) for i in [0, count). Work items must be independent; results
/// should be written to pre-sized slots indexed by i so the outcome does not
/// depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const unsigned budget = thread_budget();
  if (count == 0) return;
  if (budget <= 1 || count == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(budget, count));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace swea
