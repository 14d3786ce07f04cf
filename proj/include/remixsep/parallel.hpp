#pragma once

#include <cstddef>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace remixsep {

// Execution policy for the data-parallel kernels. Every parallel kernel has a
// serial twin reachable through ExecPolicy::serial; tests assert the two agree
// bit-exactly and bench_kernels times them against each other.
enum class ExecPolicy { serial, parallel };

inline int max_workers() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_max_workers(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

// Index-parallel loop. Each iteration must write only to its own slots so the
// result is independent of the schedule; reductions are done by the caller in
// index order.
template <typename Fn>
void parallel_for(std::size_t n, ExecPolicy policy, Fn&& fn) {
  if (policy == ExecPolicy::parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
      fn(static_cast<std::size_t>(i));
    }
    return;
#endif
  }
  for (std::size_t i = 0; i < n; ++i) fn(i);
}

}  // namespace remixsep
