#pragma once

#include <cstddef>
#include <functional>

namespace hglmm {

/// Caps the number of worker threads used by row-parallel loops. 0 means hardware concurrency.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs body(begin, end) over [0, n) in fixed-size chunks. Chunk boundaries depend only on n,
/// never on the worker count, so any per-chunk work is reproducible regardless of threading.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t chunk = 64);

}  // namespace hglmm
