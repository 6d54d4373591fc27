// AVX2 + FMA kernels. Compiled with -mavx2 -mfma -ffp-contract=off; FMA
// appears only where written explicitly. Only reached after the dispatcher
// confirms CPU support.

#include "tables.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace secnn::detail {
namespace {

struct F32x8 {
    using T = float;
    using V = __m256;
    static constexpr std::size_t width = 8;
    static V load(const T* p) { return _mm256_loadu_ps(p); }
    static void store(T* p, V x) { _mm256_storeu_ps(p, x); }
    static V set1(T x) { return _mm256_set1_ps(x); }
    static V zero() { return _mm256_setzero_ps(); }
    static V add(V a, V b) { return _mm256_add_ps(a, b); }
    static V sub(V a, V b) { return _mm256_sub_ps(a, b); }
    static V mul(V a, V b) { return _mm256_mul_ps(a, b); }
    static V div(V a, V b) { return _mm256_div_ps(a, b); }
    static V sqrt(V a) { return _mm256_sqrt_ps(a); }
    static V fmadd(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
    static V relu(V x) { return _mm256_max_ps(x, zero()); }
    static V mask_positive(V x, V g) {
        return _mm256_and_ps(_mm256_cmp_ps(x, zero(), _CMP_GT_OQ), g);
    }
};

struct F64x4 {
    using T = double;
    using V = __m256d;
    static constexpr std::size_t width = 4;
    static V load(const T* p) { return _mm256_loadu_pd(p); }
    static void store(T* p, V x) { _mm256_storeu_pd(p, x); }
    static V set1(T x) { return _mm256_set1_pd(x); }
    static V zero() { return _mm256_setzero_pd(); }
    static V add(V a, V b) { return _mm256_add_pd(a, b); }
    static V sub(V a, V b) { return _mm256_sub_pd(a, b); }
    static V mul(V a, V b) { return _mm256_mul_pd(a, b); }
    static V div(V a, V b) { return _mm256_div_pd(a, b); }
    static V sqrt(V a) { return _mm256_sqrt_pd(a); }
    static V fmadd(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
    static V relu(V x) { return _mm256_max_pd(x, zero()); }
    static V mask_positive(V x, V g) {
        return _mm256_and_pd(_mm256_cmp_pd(x, zero(), _CMP_GT_OQ), g);
    }
};

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kDepthBlock = 256;

// Row-major copy of op(X) where X is stored [cols, rows].
template <class T>
void transpose_into(const T* src, std::size_t rows, std::size_t cols, std::vector<T>& dst) {
    dst.resize(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dst[r * cols + c] = src[c * rows + r];
}

// C[i0:i0+R, j0:j0+2W] over depth [p0,p1). R is a compile-time row count so
// the accumulators live in registers.
template <class S, std::size_t R>
void micro_tile(const typename S::T* a, const typename S::T* b, typename S::T* c, std::size_t n,
                std::size_t k, std::size_t i0, std::size_t j0, std::size_t p0, std::size_t p1,
                bool load_c) {
    using V = typename S::V;
    constexpr std::size_t W = S::width;
    V acc[R][2];
    for (std::size_t r = 0; r < R; ++r) {
        typename S::T* crow = c + (i0 + r) * n + j0;
        acc[r][0] = load_c ? S::load(crow) : S::zero();
        acc[r][1] = load_c ? S::load(crow + W) : S::zero();
    }
    for (std::size_t p = p0; p < p1; ++p) {
        const V b0 = S::load(b + p * n + j0);
        const V b1 = S::load(b + p * n + j0 + W);
        for (std::size_t r = 0; r < R; ++r) {
            const V ar = S::set1(a[(i0 + r) * k + p]);
            acc[r][0] = S::fmadd(ar, b0, acc[r][0]);
            acc[r][1] = S::fmadd(ar, b1, acc[r][1]);
        }
    }
    for (std::size_t r = 0; r < R; ++r) {
        typename S::T* crow = c + (i0 + r) * n + j0;
        S::store(crow, acc[r][0]);
        S::store(crow + W, acc[r][1]);
    }
}

template <class S, std::size_t R>
void single_vector_tile(const typename S::T* a, const typename S::T* b, typename S::T* c,
                        std::size_t n, std::size_t k, std::size_t i0, std::size_t j0,
                        std::size_t p0, std::size_t p1, bool load_c) {
    using V = typename S::V;
    V acc[R];
    for (std::size_t r = 0; r < R; ++r)
        acc[r] = load_c ? S::load(c + (i0 + r) * n + j0) : S::zero();
    for (std::size_t p = p0; p < p1; ++p) {
        const V b0 = S::load(b + p * n + j0);
        for (std::size_t r = 0; r < R; ++r)
            acc[r] = S::fmadd(S::set1(a[(i0 + r) * k + p]), b0, acc[r]);
    }
    for (std::size_t r = 0; r < R; ++r) S::store(c + (i0 + r) * n + j0, acc[r]);
}

template <class S, std::size_t R>
void row_block(const typename S::T* a, const typename S::T* b, typename S::T* c, std::size_t n,
               std::size_t k, std::size_t i0, std::size_t p0, std::size_t p1, bool load_c) {
    constexpr std::size_t W = S::width;
    std::size_t j = 0;
    for (; j + 2 * W <= n; j += 2 * W) micro_tile<S, R>(a, b, c, n, k, i0, j, p0, p1, load_c);
    for (; j + W <= n; j += W) single_vector_tile<S, R>(a, b, c, n, k, i0, j, p0, p1, load_c);
    for (; j < n; ++j) {
        for (std::size_t r = 0; r < R; ++r) {
            typename S::T* cij = c + (i0 + r) * n + j;
            typename S::T acc = load_c ? *cij : typename S::T(0);
            for (std::size_t p = p0; p < p1; ++p) acc = std::fma(a[(i0 + r) * k + p], b[p * n + j], acc);
            *cij = acc;
        }
    }
}

template <class S>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const typename S::T* a, const typename S::T* b, typename S::T* c, bool accumulate) {
    using T = typename S::T;
    if (k == 0) {
        if (!accumulate) std::fill(c, c + m * n, T(0));
        return;
    }
    std::vector<T> a_packed, b_packed;
    if (trans_a) {
        transpose_into(a, m, k, a_packed);
        a = a_packed.data();
    }
    if (trans_b) {
        transpose_into(b, k, n, b_packed);
        b = b_packed.data();
    }
    for (std::size_t p0 = 0; p0 < k; p0 += kDepthBlock) {
        const std::size_t p1 = std::min(k, p0 + kDepthBlock);
        const bool load_c = accumulate || p0 > 0;
        std::size_t i = 0;
        for (; i + kRowBlock <= m; i += kRowBlock)
            row_block<S, kRowBlock>(a, b, c, n, k, i, p0, p1, load_c);
        for (; i < m; ++i) row_block<S, 1>(a, b, c, n, k, i, p0, p1, load_c);
    }
}

template <class S, class VecOp, class ScalarOp>
void binary_map(const typename S::T* a, const typename S::T* b, typename S::T* out, std::size_t n,
                VecOp vec_op, ScalarOp scalar_op) {
    std::size_t i = 0;
    for (; i + S::width <= n; i += S::width) S::store(out + i, vec_op(S::load(a + i), S::load(b + i)));
    for (; i < n; ++i) out[i] = scalar_op(a[i], b[i]);
}

template <class S>
void add(const typename S::T* a, const typename S::T* b, typename S::T* out, std::size_t n) {
    binary_map<S>(a, b, out, n, S::add, [](auto x, auto y) { return x + y; });
}

template <class S>
void sub(const typename S::T* a, const typename S::T* b, typename S::T* out, std::size_t n) {
    binary_map<S>(a, b, out, n, S::sub, [](auto x, auto y) { return x - y; });
}

template <class S>
void mul(const typename S::T* a, const typename S::T* b, typename S::T* out, std::size_t n) {
    binary_map<S>(a, b, out, n, S::mul, [](auto x, auto y) { return x * y; });
}

template <class S>
void scale(typename S::T alpha, const typename S::T* x, typename S::T* out, std::size_t n) {
    const auto va = S::set1(alpha);
    std::size_t i = 0;
    for (; i + S::width <= n; i += S::width) S::store(out + i, S::mul(va, S::load(x + i)));
    for (; i < n; ++i) out[i] = alpha * x[i];
}

template <class S>
void accumulate(const typename S::T* x, typename S::T* y, std::size_t n) {
    binary_map<S>(y, x, y, n, S::add, [](auto u, auto v) { return u + v; });
}

template <class S>
void relu(const typename S::T* x, typename S::T* out, std::size_t n) {
    using T = typename S::T;
    std::size_t i = 0;
    for (; i + S::width <= n; i += S::width) S::store(out + i, S::relu(S::load(x + i)));
    for (; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class S>
void relu_backward(const typename S::T* x, const typename S::T* g, typename S::T* out,
                   std::size_t n) {
    using T = typename S::T;
    std::size_t i = 0;
    for (; i + S::width <= n; i += S::width)
        S::store(out + i, S::mask_positive(S::load(x + i), S::load(g + i)));
    for (; i < n; ++i) out[i] = x[i] > T(0) ? g[i] : T(0);
}

template <class S>
void adam_update(typename S::T* value, typename S::T* m, typename S::T* v,
                 const typename S::T* grad, std::size_t n, const AdamCoeffs<typename S::T>& k) {
    using T = typename S::T;
    const bool decay = k.weight_decay != T(0);
    const auto b1 = S::set1(k.beta1), b2 = S::set1(k.beta2);
    const auto omb1 = S::set1(k.one_minus_beta1), omb2 = S::set1(k.one_minus_beta2);
    const auto bc1 = S::set1(k.bias_correction1), bc2 = S::set1(k.bias_correction2);
    const auto lr = S::set1(k.lr), eps = S::set1(k.eps), wd = S::set1(k.weight_decay);
    std::size_t i = 0;
    for (; i + S::width <= n; i += S::width) {
        auto val = S::load(value + i);
        auto g = S::load(grad + i);
        if (decay) g = S::add(g, S::mul(wd, val));
        const auto mi = S::add(S::mul(b1, S::load(m + i)), S::mul(omb1, g));
        const auto vi = S::add(S::mul(b2, S::load(v + i)), S::mul(omb2, S::mul(g, g)));
        S::store(m + i, mi);
        S::store(v + i, vi);
        const auto m_hat = S::div(mi, bc1);
        const auto v_hat = S::div(vi, bc2);
        val = S::sub(val, S::div(S::mul(lr, m_hat), S::add(S::sqrt(v_hat), eps)));
        S::store(value + i, val);
    }
    // Tail mirrors the scalar reference; the TU is built with -ffp-contract=off.
    for (; i < n; ++i) {
        T g = grad[i];
        if (decay) g = g + k.weight_decay * value[i];
        const T mi = k.beta1 * m[i] + k.one_minus_beta1 * g;
        const T vi = k.beta2 * v[i] + k.one_minus_beta2 * (g * g);
        m[i] = mi;
        v[i] = vi;
        const T m_hat = mi / k.bias_correction1;
        const T v_hat = vi / k.bias_correction2;
        value[i] = value[i] - (k.lr * m_hat) / (std::sqrt(v_hat) + k.eps);
    }
}

template <class S>
KernelSet<typename S::T> make_set() {
    return KernelSet<typename S::T>{&gemm<S>,       &add<S>,  &sub<S>,
                                    &mul<S>,        &scale<S>, &accumulate<S>,
                                    &relu<S>,       &relu_backward<S>, &adam_update<S>};
}

const KernelTable table{Isa::avx2, make_set<F32x8>(), make_set<F64x4>()};

}  // namespace

const KernelTable* avx2_table() { return &table; }

}  // namespace secnn::detail

#else

namespace secnn::detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace secnn::detail

#endif
