#ifndef RDPS_PARALLEL_HPP_
#define RDPS_PARALLEL_HPP_

#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rdps {

// Worker count for a request: n <= 0 means "auto" (the RDPS_THREADS
// environment variable if set, else the OpenMP default). Builds without
// OpenMP always run on one thread.
inline int effective_threads(int requested) {
#ifdef _OPENMP
  if (requested > 0) return requested;
  if (const char* env = std::getenv("RDPS_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  return omp_get_max_threads();
#else
  (void)requested;
  return 1;
#endif
}

// Runs body(i) for i in [0, n). Iterations must be independent; results must
// be written to disjoint slots so the outcome does not depend on scheduling.
template <typename F>
void parallel_for(int n, int threads, F&& body) {
#ifdef _OPENMP
  if (threads > 1) {
#pragma omp parallel for num_threads(threads) schedule(dynamic)
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
#else
  (void)threads;
#endif
  for (int i = 0; i < n; ++i) body(i);
}

}  // namespace rdps

#endif  // RDPS_PARALLEL_HPP_
