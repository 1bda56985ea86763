#pragma once

#include <cstddef>
#include <functional>
#include <utility>

namespace edgefield {

/// Worker count used by parallel_for. 0 means "all hardware threads".
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs fn(i) for i in [0, n). Work items must be independent; results
/// are identical for every thread count because nothing is reduced here.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Number of fixed reduction chunks. Reductions split work into this many
/// chunks regardless of the thread count and combine them in chunk order,
/// so floating-point sums do not depend on the number of workers.
inline constexpr std::size_t kReductionChunks = 32;

/// Half-open index range of chunk c when n items are split into `chunks` parts.
inline std::pair<std::size_t, std::size_t> chunk_range(std::size_t n, std::size_t c,
                                                       std::size_t chunks = kReductionChunks) {
  const std::size_t begin = n * c / chunks;
  const std::size_t end = n * (c + 1) / chunks;
  return {begin, end};
}

}  // namespace edgefield
