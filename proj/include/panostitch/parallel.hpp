#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace panostitch {

/// Worker cap from PANOSTITCH_THREADS (0 or unset = hardware concurrency).
int worker_count();

/// Runs fn(row) for every row in [0, rows). Rows are split into contiguous
/// chunks, one per worker. Callers must only write row-private state so the
/// result does not depend on the worker count.
template <typename Fn>
void parallel_rows(int rows, Fn&& fn) {
  const int workers = std::min(worker_count(), rows);
  if (workers <= 1) {
    for (int r = 0; r < rows; ++r) fn(r);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const int chunk = (rows + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int begin = w * chunk;
    const int end = std::min(rows, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] {
      for (int r = begin; r < end; ++r) fn(r);
    });
  }
  for (auto& t : pool) t.join();
}

/// Sums per-row partials in row order; deterministic across worker counts.
template <typename T, typename RowFn>
T parallel_row_sum(int rows, RowFn&& row_fn) {
  std::vector<T> partial(static_cast<std::size_t>(rows), T(0));
  parallel_rows(rows, [&](int r) { partial[r] = row_fn(r); });
  T total(0);
  for (const T& v : partial) total += v;
  return total;
}

}  // namespace panostitch
