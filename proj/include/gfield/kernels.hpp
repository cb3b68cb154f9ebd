#pragma once

#include <cstddef>
#include <string_view>

namespace gfield::kernels {

// Dense-layer and vector primitives shared by the decoder and the aggregator.
// Matrices are row-major; W is out x in.
struct KernelTable {
    const char* name;

    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // Y[r, o] = b[o] + sum_i W[o, i] * X[r, i]
    void (*dense_forward)(const double* w, const double* b, const double* x, double* y, std::size_t rows,
                          std::size_t in, std::size_t out);
    // dW += dY^T X, db += colsum(dY), and dX = dY W when dx is non-null.
    void (*dense_backward)(const double* w, const double* x, const double* dy, double* dx, double* dw,
                           double* db, std::size_t rows, std::size_t in, std::size_t out);
};

const KernelTable& scalar_table();

// Null when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_table();

// Selected once per process: AVX2 when available unless GFIELD_KERNELS=scalar.
const KernelTable& active();

// Override the selection (tests and benchmarks). Unknown names are ignored; returns success.
bool select(std::string_view name);

}  // namespace gfield::kernels
