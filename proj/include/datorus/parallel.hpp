#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace datorus {

/// Global worker cap (set from the CLI --threads flag). 0 means hardware default.
int& worker_cap();

int effective_workers(std::size_t items);

/// Runs fn(begin, end) over fixed-size chunks of [0, n). The chunk grid is
/// independent of the worker count, so chunk-local results are reproducible.
void parallel_chunks(std::size_t n, std::size_t chunk,
                     const std::function<void(std::size_t, std::size_t)>& fn);

/// Deterministic pairwise sum (fixed reduction tree independent of threading).
double pairwise_sum(const std::vector<double>& v);

}  // namespace datorus
