#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace greenmatch {

/// Parallel map over [0, n). threads == 1 runs the plain serial loop (the
/// reference path used in tests); threads <= 0 means "use all cores".
/// Bodies must write to disjoint locations so results are identical for any
/// thread count.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& body) {
    if (threads == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
#ifdef _OPENMP
    if (threads <= 0) threads = omp_get_max_threads();
#pragma omp parallel for num_threads(threads) schedule(dynamic)
    for (int i = 0; i < n; ++i) body(i);
#else
    for (int i = 0; i < n; ++i) body(i);
#endif
}

inline int hardware_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace greenmatch
