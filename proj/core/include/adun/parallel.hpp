#pragma once

#include <functional>
#include <thread>
#include <vector>

#include <Eigen/Dense>

namespace adun {

/// Runs fn(i) for i in [0, count) over `threads` workers on contiguous index
/// chunks. Callers keep determinism by writing to per-index slots only.
inline void parallel_for(Eigen::Index count, int threads,
                         const std::function<void(Eigen::Index)>& fn) {
  if (count <= 0) return;
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(count)));
  if (workers == 1) {
    for (Eigen::Index i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const Eigen::Index chunk = (count + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const Eigen::Index begin = static_cast<Eigen::Index>(w) * chunk;
    const Eigen::Index end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([begin, end, &fn] {
      for (Eigen::Index i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

/// Process-wide worker count for evaluation loops (the CLI --threads flag).
void set_thread_count(int threads);
int thread_count();

}  // namespace adun
