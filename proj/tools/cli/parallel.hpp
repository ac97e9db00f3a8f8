#pragma once

#include <algorithm>
#include <cstddef>
#include <future>
#include <thread>
#include <vector>

namespace mechreg::cli {

/// Evaluates f(0) … f(n−1) with at most `jobs` concurrent workers (0: one per
/// hardware thread). Results come back in index order whatever the
/// completion order; the first exception is rethrown after all workers of its
/// batch have finished.
template <class F>
auto run_grid(std::size_t n, int jobs, F f) -> std::vector<decltype(f(std::size_t{}))> {
  using R = decltype(f(std::size_t{}));
  std::size_t width = jobs > 0 ? static_cast<std::size_t>(jobs) : std::max(1u, std::thread::hardware_concurrency());
  std::vector<R> out;
  out.reserve(n);
  if (width <= 1) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(f(i));
    return out;
  }
  for (std::size_t start = 0; start < n; start += width) {
    std::vector<std::future<R>> batch;
    for (std::size_t i = start; i < std::min(n, start + width); ++i) batch.push_back(std::async(std::launch::async, f, i));
    for (auto& fut : batch) fut.wait();
    for (auto& fut : batch) out.push_back(fut.get());
  }
  return out;
}

}  // namespace mechreg::cli
