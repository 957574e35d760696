#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace aaim {

/// Worker count from AAIM_WORKERS, falling back to the hardware count.
inline std::size_t default_workers() {
  if (const char* env = std::getenv("AAIM_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Splits [0, count) into contiguous chunks, one per worker. Each chunk
/// writes only its own output slots, so results do not depend on the
/// number of workers. The first exception thrown by any chunk is rethrown.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  if (workers == 0) workers = default_workers();
  workers = std::min(workers, count);
  if (workers <= 1) {
    if (count > 0) fn(std::size_t{0}, count);
    return;
  }
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  const std::size_t chunk = (count + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    threads.emplace_back([&, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

/// Runs fn(begin, end) over fixed-size tiles of [0, count). Tile borders do
/// not move with the worker count, so blocked linear algebra inside a tile
/// produces identical bits however the tiles are scheduled.
template <typename Fn>
void parallel_tiles(std::size_t count, std::size_t tile, std::size_t workers,
                    Fn&& fn) {
  const std::size_t tiles = (count + tile - 1) / tile;
  parallel_for(tiles, workers, [&](std::size_t t0, std::size_t t1) {
    for (std::size_t t = t0; t < t1; ++t) {
      fn(t * tile, std::min(count, (t + 1) * tile));
    }
  });
}

}  // namespace aaim
