#ifndef PSPC_PARALLEL_HPP
#define PSPC_PARALLEL_HPP

#include <cstddef>
#include <exception>
#include <mutex>

#ifdef PSPC_HAVE_OPENMP
#include <omp.h>
#endif

namespace pspc {

inline void set_num_threads(int n) {
#ifdef PSPC_HAVE_OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

inline int num_threads() {
#ifdef PSPC_HAVE_OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

/// Runs body(i) for i in [0, n). Each index writes only its own slots; the first exception is rethrown.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
    std::exception_ptr error;
    std::mutex error_mutex;
#ifdef PSPC_HAVE_OPENMP
#pragma omp parallel for schedule(dynamic) if (n > 1)
#endif
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace pspc

#endif
