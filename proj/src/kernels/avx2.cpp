// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "gfield/kernels.hpp"

#include <immintrin.h>

namespace gfield::kernels {

namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d a = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(a, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void dense_forward(const double* w, const double* b, const double* x, double* y, std::size_t rows,
                   std::size_t in, std::size_t out) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x + r * in;
        double* yr = y + r * out;
        for (std::size_t o = 0; o < out; ++o) yr[o] = b[o] + dot(w + o * in, xr, in);
    }
}

void dense_backward(const double* w, const double* x, const double* dy, double* dx, double* dw, double* db,
                    std::size_t rows, std::size_t in, std::size_t out) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x + r * in;
        const double* gr = dy + r * out;
        double* dxr = dx ? dx + r * in : nullptr;
        if (dxr) {
            for (std::size_t i = 0; i < in; ++i) dxr[i] = 0.0;
        }
        for (std::size_t o = 0; o < out; ++o) {
            const double g = gr[o];
            if (g == 0.0) continue;
            db[o] += g;
            axpy(g, xr, dw + o * in, in);
            if (dxr) axpy(g, w + o * in, dxr, in);
        }
    }
}

}  // namespace

const KernelTable& avx2_kernels() {
    static const KernelTable table{"avx2", dot, axpy, dense_forward, dense_backward};
    return table;
}

}  // namespace gfield::kernels
