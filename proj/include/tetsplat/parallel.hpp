#pragma once

#include <cstddef>
#include <functional>

namespace tetsplat {

// Worker count: hardware concurrency, capped by TETSPLAT_THREADS when set.
int worker_count();

// Override for tests; 0 restores the environment-derived default.
void set_worker_count(int n);

// Runs body(begin, end) over contiguous chunks of [0, n). Chunk boundaries
// depend only on n and grain, never on the worker count, so callers that
// reduce per-chunk results in chunk order get identical output for any
// number of threads.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body);

inline std::size_t chunk_count(std::size_t n, std::size_t grain) {
  return grain == 0 ? 0 : (n + grain - 1) / grain;
}

}  // namespace tetsplat
