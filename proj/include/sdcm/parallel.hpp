#pragma once

// Shared-memory parallel helpers. Every helper here produces results that do
// not depend on the worker count: loop bodies write disjoint slots, and
// reductions combine fixed-size chunks in index order.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace sdcm::parallel {

inline constexpr std::size_t kReduceChunk = 1024;
inline constexpr const char* kWorkersEnv = "SDCM_WORKERS";

/// Requested > 0 wins; otherwise SDCM_WORKERS; otherwise 1.
inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv(kWorkersEnv)) {
    const int value = std::atoi(env);
    if (value > 0) return value;
  }
  return 1;
}

inline int hardware_workers() {
#if defined(_OPENMP)
  return omp_get_num_procs();
#else
  return 1;
#endif
}

namespace detail {

class FirstException {
 public:
  void capture() {
    std::lock_guard lock(mutex_);
    if (!error_) error_ = std::current_exception();
  }
  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::mutex mutex_;
  std::exception_ptr error_;
};

}  // namespace detail

enum class Schedule { kStatic, kDynamic };

/// Runs body(i) for i in [0, n). Exceptions thrown by the body are
/// rethrown on the calling thread (the first one wins).
template <class Body>
void for_each_index(std::size_t n, int workers, Body&& body, Schedule schedule = Schedule::kStatic) {
  workers = std::max(1, workers);
#if defined(_OPENMP)
  if (workers > 1 && n > 1) {
    detail::FirstException failure;
    const auto count = static_cast<std::ptrdiff_t>(n);
    if (schedule == Schedule::kDynamic) {
#pragma omp parallel for num_threads(workers) schedule(dynamic, 1)
      for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
          body(static_cast<std::size_t>(i));
        } catch (...) {
          failure.capture();
        }
      }
    } else {
#pragma omp parallel for num_threads(workers) schedule(static)
      for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
          body(static_cast<std::size_t>(i));
        } catch (...) {
          failure.capture();
        }
      }
    }
    failure.rethrow();
    return;
  }
#else
  (void)schedule;
#endif
  for (std::size_t i = 0; i < n; ++i) body(i);
}

/// chunk_fn(begin, end) -> T over fixed chunks of kReduceChunk indices;
/// partials are folded left to right with combine(acc, partial).
template <class T, class ChunkFn, class Combine>
T chunked_reduce(std::size_t n, int workers, T identity, ChunkFn&& chunk_fn, Combine&& combine) {
  const std::size_t chunks = (n + kReduceChunk - 1) / kReduceChunk;
  std::vector<T> partial(chunks, identity);
  for_each_index(chunks, workers, [&](std::size_t c) {
    const std::size_t begin = c * kReduceChunk;
    partial[c] = chunk_fn(begin, std::min(n, begin + kReduceChunk));
  });
  T acc = std::move(identity);
  for (const T& p : partial) acc = combine(std::move(acc), p);
  return acc;
}

}  // namespace sdcm::parallel
