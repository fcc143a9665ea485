#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace codedevent {

/// Runs f(i) for i in [0, n) on up to `workers` threads. Each index is
/// handled exactly once; callers write results into per-index slots, so the
/// output does not depend on scheduling. The first exception is rethrown.
template <class F>
void parallel_for(std::size_t n, int workers, F&& f) {
  const std::size_t w = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::exception_ptr> errors(w);
  std::vector<std::thread> threads;
  threads.reserve(w);
  for (std::size_t t = 0; t < w; ++t) {
    threads.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += w) f(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace codedevent
