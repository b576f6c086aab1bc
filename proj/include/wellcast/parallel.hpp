#pragma once

#include <cstddef>
#include <functional>

namespace wellcast {

/// Number of hardware threads, at least 1.
int default_workers() noexcept;

/// Runs body(i) for i in [0, count) on up to `workers` threads.
///
/// Each index runs exactly once; callers must write only to index-owned
/// state so results do not depend on the worker count. If any body throws,
/// the exception from the lowest failing index is rethrown after all
/// workers finish.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& body);

/// As parallel_for, but also passes the slot (in [0, workers)) of the thread
/// running the body, for indexing per-thread scratch state.
void parallel_for_slots(std::size_t count, int workers,
                        const std::function<void(std::size_t index, std::size_t slot)>& body);

}  // namespace wellcast
