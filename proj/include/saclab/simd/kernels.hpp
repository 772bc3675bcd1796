#pragma once
// Dense inner loops used by every quadratic-loss estimator.
//
// Each kernel has a scalar reference implementation and an AVX2 variant. The
// active variant is chosen once at startup from the CPU feature flags and can
// be pinned for equivalence testing with set_isa().
//
// Reduction order: axpy_rows/gemv_t accumulate sequentially over rows, so the
// scalar and AVX2 paths are bit-identical there. dot/gemv use lane-parallel
// partial sums on AVX2 and agree with the reference to rounding.

#include <cstddef>
#include <span>
#include <string_view>

namespace saclab::simd {

enum class Isa { scalar, avx2 };

struct KernelTable {
    double (*dot)(const double* a, const double* b, std::size_t n);
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // out[t] = <W[t,:], x>, W row-major rows x cols
    void (*gemv)(const double* w, std::size_t rows, std::size_t cols, const double* x, double* out);
    // out[j] = sum_t r[t] * W[t, j], accumulated in row order
    void (*gemv_t)(const double* w, std::size_t rows, std::size_t cols, const double* r, double* out);
    double (*sum_squares)(const double* a, std::size_t n);
};

const KernelTable& scalar_table();
const KernelTable& avx2_table();  // falls back to scalar on non-x86 builds

bool cpu_has_avx2();
Isa active_isa();
void set_isa(Isa isa);  // throws InvalidInput if the CPU cannot run it
std::string_view isa_name(Isa isa);
const KernelTable& kernels();

inline double dot(std::span<const double> a, std::span<const double> b) {
    return kernels().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    kernels().axpy(alpha, x.data(), y.data(), x.size());
}
inline double sum_squares(std::span<const double> a) { return kernels().sum_squares(a.data(), a.size()); }

} // namespace saclab::simd
