#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ast {

// Global worker cap, settable from the CLI (--threads). 0 means "whatever
// OpenMP decides".
int max_threads();
void set_max_threads(int n);

// Parallel loop over [0, n). Each index is handled by exactly one worker and
// the body must only write state owned by its index, so results are identical
// for any thread count.
template <class F>
inline void parallel_for(int64_t n, F&& body, int64_t grain = 1024) {
#ifdef _OPENMP
  if (n >= grain && max_threads() != 1) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) body(i);
    return;
  }
#endif
  (void)grain;
  for (int64_t i = 0; i < n; ++i) body(i);
}

inline int& max_threads_slot() {
  static int n = 0;
  return n;
}

inline int max_threads() { return max_threads_slot(); }

inline void set_max_threads(int n) {
  max_threads_slot() = n;
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}

}  // namespace ast
