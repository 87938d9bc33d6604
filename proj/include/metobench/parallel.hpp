#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <future>
#include <thread>
#include <vector>

namespace metobench {

// Runs produce(i) for i in [0, n) on up to `workers` threads and hands each
// result to commit(i, result) on the calling thread in index order, as soon
// as it and all earlier results are ready. An exception from either callback
// stops the workers after their current task and is rethrown.
template <typename Produce, typename Commit>
void ordered_parallel(std::size_t n, int workers, Produce&& produce, Commit&& commit) {
  using T = decltype(produce(std::size_t{0}));
  std::vector<std::promise<T>> promises(n);
  std::vector<std::future<T>> futures;
  futures.reserve(n);
  for (auto& p : promises) futures.push_back(p.get_future());

  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  const int n_workers = static_cast<int>(std::max<std::size_t>(1, std::min<std::size_t>(std::max(workers, 1), n)));
  std::vector<std::jthread> pool;
  for (int t = 0; t < n_workers && n > 0; ++t) {
    pool.emplace_back([&] {
      while (!stop) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          promises[i].set_value(produce(i));
        } catch (...) {
          promises[i].set_exception(std::current_exception());
        }
      }
    });
  }
  try {
    for (std::size_t i = 0; i < n; ++i) commit(i, futures[i].get());
  } catch (...) {
    stop = true;
    throw;
  }
}

}  // namespace metobench
