#include "saclab/simd/kernels.hpp"

namespace saclab::simd {
namespace {

double dot_ref(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_ref(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_ref(const double* w, std::size_t rows, std::size_t cols, const double* x, double* out) {
    for (std::size_t t = 0; t < rows; ++t) out[t] = dot_ref(w + t * cols, x, cols);
}

void gemv_t_ref(const double* w, std::size_t rows, std::size_t cols, const double* r, double* out) {
    for (std::size_t j = 0; j < cols; ++j) out[j] = 0.0;
    for (std::size_t t = 0; t < rows; ++t) {
        if (r[t] != 0.0) axpy_ref(r[t], w + t * cols, out, cols);
    }
}

double sum_squares_ref(const double* a, std::size_t n) { return dot_ref(a, a, n); }

} // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{dot_ref, axpy_ref, gemv_ref, gemv_t_ref, sum_squares_ref};
    return table;
}

} // namespace saclab::simd
