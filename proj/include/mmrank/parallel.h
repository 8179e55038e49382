#ifndef MMRANK_PARALLEL_H_
#define MMRANK_PARALLEL_H_

#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mmrank {

// Calls fn(i) for every i in [0, n), splitting the range into contiguous
// blocks over at most num_threads threads (num_threads <= 1 runs inline).
// fn must only write to state owned by index i; reductions are left to the
// caller so that results do not depend on the thread count. The first
// exception thrown by any block is rethrown.
template <typename Fn>
void parallel_for(int n, int num_threads, Fn&& fn) {
  const int workers = std::min(std::max(num_threads, 1), std::max(n, 1));
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const int begin = static_cast<int>(static_cast<long long>(n) * w / workers);
    const int end = static_cast<int>(static_cast<long long>(n) * (w + 1) / workers);
    threads.emplace_back([&, begin, end] {
      try {
        for (int i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace mmrank

#endif  // MMRANK_PARALLEL_H_
