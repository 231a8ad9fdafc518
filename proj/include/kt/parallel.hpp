#pragma once

#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#define KT_STRINGIFY_(x) #x
#define KT_PRAGMA_OMP(x) _Pragma(KT_STRINGIFY_(omp x))
#else
#define KT_PRAGMA_OMP(x)
#endif

namespace kt::par {

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

// Fixed contiguous partition of [0, n) into nchunks pieces.
inline void chunk_range(int64_t n, int chunk, int nchunks, int64_t& begin, int64_t& end) {
    const int64_t base = n / nchunks;
    const int64_t rem = n % nchunks;
    begin = chunk * base + (chunk < rem ? chunk : rem);
    end = begin + base + (chunk < rem ? 1 : 0);
}

inline double dot_serial(const double* a, const double* b, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

// Dot product with per-thread partial sums over fixed contiguous ranges,
// combined in thread order. Bitwise-stable for a fixed thread count.
inline double dot(const double* a, const double* b, int64_t n) {
#ifdef _OPENMP
    const int nt = omp_get_max_threads();
    if (nt <= 1 || n < 4096) return dot_serial(a, b, n);
    std::vector<double> partial(nt, 0.0);
#pragma omp parallel num_threads(nt)
    {
        const int t = omp_get_thread_num();
        int64_t lo, hi;
        chunk_range(n, t, nt, lo, hi);
        double s = 0.0;
        for (int64_t i = lo; i < hi; ++i) s += a[i] * b[i];
        partial[t] = s;
    }
    double s = 0.0;
    for (int t = 0; t < nt; ++t) s += partial[t];
    return s;
#else
    return dot_serial(a, b, n);
#endif
}

inline void axpy_serial(double alpha, const double* x, double* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

inline void axpy(double alpha, const double* x, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (n >= 8192)
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// y = x + alpha * y
inline void xpay(const double* x, double alpha, double* y, int64_t n) {
#pragma omp parallel for schedule(static) if (n >= 8192)
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] + alpha * y[i];
}

}  // namespace kt::par
