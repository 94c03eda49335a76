#pragma once

#include <cstddef>
#include <functional>

namespace cafield {

/// Worker cap: CAFIELD_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs body(begin, end) over disjoint chunks of [0, n). Callers must only
/// write to outputs owned by their chunk, so results do not depend on the
/// number of workers.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace cafield
