#include "datorus/parallel.hpp"

#include <atomic>

namespace datorus {

int& worker_cap() {
  static int cap = 0;
  return cap;
}

int effective_workers(std::size_t items) {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  int n = worker_cap() > 0 ? std::min<int>(worker_cap(), static_cast<int>(hw))
                           : static_cast<int>(hw);
  if (items < static_cast<std::size_t>(n)) n = static_cast<int>(std::max<std::size_t>(items, 1));
  return n;
}

void parallel_chunks(std::size_t n, std::size_t chunk,
                     const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  if (chunk == 0) chunk = 1;
  std::size_t nchunks = (n + chunk - 1) / chunk;
  int workers = effective_workers(nchunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < nchunks; ++c)
      fn(c * chunk, std::min(n, (c + 1) * chunk));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        std::size_t c = next.fetch_add(1);
        if (c >= nchunks) return;
        fn(c * chunk, std::min(n, (c + 1) * chunk));
      }
    });
  }
  for (auto& t : pool) t.join();
}

double pairwise_sum(const std::vector<double>& v) {
  // bottom-up pairwise reduction; order fixed by element index
  std::function<double(std::size_t, std::size_t)> rec =
      [&](std::size_t lo, std::size_t hi) -> double {
    if (hi - lo <= 8) {
      double s = 0.0;
      for (std::size_t i = lo; i < hi; ++i) s += v[i];
      return s;
    }
    std::size_t mid = lo + (hi - lo) / 2;
    return rec(lo, mid) + rec(mid, hi);
  };
  if (v.empty()) return 0.0;
  return rec(0, v.size());
}

}  // namespace datorus
