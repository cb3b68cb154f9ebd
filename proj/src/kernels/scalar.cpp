#include "gfield/kernels.hpp"

namespace gfield::kernels {

namespace {

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
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

const KernelTable& scalar_table() {
    static const KernelTable table{"scalar", dot, axpy, dense_forward, dense_backward};
    return table;
}

}  // namespace gfield::kernels
