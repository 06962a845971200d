#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace wpcm {

// Calls fn(r) for r = 0..n-1 on up to `threads` workers (worker w takes
// r = w, w + workers, ...). The first exception of any worker is rethrown
// after all workers finish.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int r = 0; r < n; ++r) fn(r);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int r = w; r < n; r += workers) fn(r);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace wpcm
