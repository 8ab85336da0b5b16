#pragma once

#include <cstddef>
#include <functional>

namespace autohead {

/// Runs body(worker) on `workers` threads (inline when workers <= 1) and rethrows the
/// first exception after all threads have joined.
void run_workers(std::size_t workers, const std::function<void(std::size_t)>& body);

/// Calls body(i) for i in [0, n) with dynamic scheduling over at most `workers` threads.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& body);

}  // namespace autohead
