#include "bevocc/parallel.hpp"

#include <algorithm>
#include <stdexcept>
#include <thread>
#include <vector>

namespace bevocc {

namespace {
int g_threads = 1;
}

void set_thread_count(int n) {
  if (n < 1) throw std::invalid_argument("set_thread_count: need n >= 1");
  g_threads = n;
}

int thread_count() { return g_threads; }

void parallel_for(int64_t begin, int64_t end, const std::function<void(int64_t)>& fn) {
  const int64_t count = end - begin;
  if (count <= 0) return;
  const int nt = static_cast<int>(std::min<int64_t>(g_threads, count));
  if (nt <= 1) {
    for (int64_t i = begin; i < end; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(static_cast<size_t>(nt));
  for (int t = 0; t < nt; ++t) {
    const int64_t lo = begin + count * t / nt;
    const int64_t hi = begin + count * (t + 1) / nt;
    workers.emplace_back([lo, hi, &fn] {
      for (int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace bevocc
