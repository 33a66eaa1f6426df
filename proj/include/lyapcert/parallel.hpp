#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

namespace lyapcert {

/// Worker count: LYAPCERT_THREADS if set (>= 1), else hardware concurrency.
std::size_t worker_count();

/// Runs body(chunk) for chunk in [0, chunks) across worker threads and blocks.
/// Callers write into per-chunk slots and reduce in chunk order, so results
/// never depend on the thread count.
void parallel_chunks(std::size_t chunks, const std::function<void(std::size_t)>& body);

/// Independent seed for stream i of a master seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace lyapcert
