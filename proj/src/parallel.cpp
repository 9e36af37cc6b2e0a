#include "bgate/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace bgate {

namespace {

std::atomic<int> g_threads{0};
thread_local bool t_in_worker = false;

}  // namespace

void set_thread_count(int threads) { g_threads = std::max(0, threads); }

int thread_count() {
  const int t = g_threads.load();
  if (t > 0) return t;
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(int n, const std::function<void(int)>& body, int threads) {
  if (threads <= 0) threads = thread_count();
  threads = std::min(threads, n);
  if (threads <= 1 || t_in_worker) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  auto worker = [&] {
    t_in_worker = true;
    for (int i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
    t_in_worker = false;
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace bgate
