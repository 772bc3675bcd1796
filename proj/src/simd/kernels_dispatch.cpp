#include "saclab/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#include "saclab/errors.hpp"

namespace saclab::simd {
namespace {

Isa detect() {
    if (const char* env = std::getenv("SAC_LAB_SIMD")) {
        if (std::string(env) == "scalar") return Isa::scalar;
    }
    return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
    static std::atomic<Isa> isa{detect()};
    return isa;
}

} // namespace

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
    if (isa == Isa::avx2 && !cpu_has_avx2()) throw InvalidInput("AVX2 kernels requested on a CPU without AVX2/FMA");
    current().store(isa, std::memory_order_relaxed);
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

const KernelTable& kernels() { return active_isa() == Isa::avx2 ? avx2_table() : scalar_table(); }

} // namespace saclab::simd
