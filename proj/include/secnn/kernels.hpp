#pragma once

// Inner-loop kernels behind the tensor ops. Every kernel has a scalar
// reference implementation; SIMD variants (AVX2+FMA on x86-64, NEON on
// aarch64) are selected once at startup from the CPU's capabilities.
//
// Elementwise kernels and the Adam update use the same operation order as
// the scalar reference and no fused multiply-add, so they are bitwise equal
// across ISAs. GEMM accumulates every output element in ascending-k order on
// all ISAs but the SIMD variants use FMA, so it agrees with the reference
// only to rounding.

#include <cstddef>
#include <optional>
#include <string_view>
#include <type_traits>
#include <vector>

namespace secnn {

enum class Isa { scalar, avx2, neon };

std::string_view to_string(Isa isa) noexcept;
std::optional<Isa> parse_isa(std::string_view name) noexcept;

template <class T>
struct AdamCoeffs {
    T lr;
    T beta1;
    T beta2;
    T one_minus_beta1;
    T one_minus_beta2;
    T bias_correction1;  // 1 - beta1^t
    T bias_correction2;  // 1 - beta2^t
    T eps;
    T weight_decay;      // 0 disables the decay term
};

template <class T>
struct KernelSet {
    // C[m,n] (+)= op(A)[m,k] * op(B)[k,n]. With trans_a, A is stored [k,m];
    // with trans_b, B is stored [n,k]. All operands row-major and dense.
    void (*gemm)(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 const T* a, const T* b, T* c, bool accumulate);

    void (*add)(const T* a, const T* b, T* out, std::size_t n);
    void (*sub)(const T* a, const T* b, T* out, std::size_t n);
    void (*mul)(const T* a, const T* b, T* out, std::size_t n);
    void (*scale)(T alpha, const T* x, T* out, std::size_t n);
    // y += x
    void (*accumulate)(const T* x, T* y, std::size_t n);
    void (*relu)(const T* x, T* out, std::size_t n);
    // out = x > 0 ? g : 0
    void (*relu_backward)(const T* x, const T* g, T* out, std::size_t n);
    void (*adam_update)(T* value, T* m, T* v, const T* grad, std::size_t n,
                        const AdamCoeffs<T>& coeffs);
};

struct KernelTable {
    Isa isa;
    KernelSet<float> f32;
    KernelSet<double> f64;
};

// Kernel table in use. Chosen on first call: the SECNN_ISA environment
// variable (scalar|avx2|neon) if set and supported, else the best ISA the
// CPU supports.
const KernelTable& active_kernels();

// Table for a specific ISA, or nullptr when it is not compiled in or the CPU
// lacks it.
const KernelTable* kernels_for(Isa isa);

std::vector<Isa> available_isas();

// Overrides the active table; returns false if the ISA is unavailable.
bool set_active_isa(Isa isa);

template <class T>
const KernelSet<T>& kernels() {
    if constexpr (std::is_same_v<T, float>) {
        return active_kernels().f32;
    } else {
        return active_kernels().f64;
    }
}

}  // namespace secnn
