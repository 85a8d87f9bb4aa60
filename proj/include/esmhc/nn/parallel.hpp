#pragma once

#include <cstddef>
#include <functional>

namespace esmhc::nn {

/// Worker count for parallel_for: ESMHC_THREADS when set and positive, else 1.
std::size_t thread_count();

/// Override for tests and the CLI; 0 restores the environment default.
void set_thread_count(std::size_t count);

/// Splits [0, count) into at most thread_count() contiguous chunks and runs
/// body(begin, end) on each. Chunk boundaries depend only on count and the
/// worker count, and each index is owned by exactly one chunk, so results do
/// not depend on scheduling.
void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace esmhc::nn
