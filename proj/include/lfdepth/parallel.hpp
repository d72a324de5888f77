#pragma once

#include <cstddef>
#include <functional>

namespace lfd {

/// Number of workers used when a caller passes threads = 0.
int default_thread_count();

/// Splits [0, count) into contiguous chunks and runs body(begin, end) on up to
/// `threads` workers. Chunk boundaries depend only on count and threads, and
/// callers write disjoint outputs, so results never depend on scheduling.
/// Workers are capped so each chunk holds at least `min_chunk` items.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t, std::size_t)>& body,
                  std::size_t min_chunk = 1);

}  // namespace lfd
