// NEON kernels for aarch64. GEMM uses vfmaq; elementwise kernels and the
// Adam update avoid fused operations to stay bitwise equal to the reference.

#include "tables.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)

#include <arm_neon.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace secnn::detail {
namespace {

template <class T>
void gemm_scalar_tail(const T* a, const T* b, T* c, std::size_t n, std::size_t k, std::size_t i,
                      std::size_t j, bool load_c) {
    T acc = load_c ? c[i * n + j] : T(0);
    for (std::size_t p = 0; p < k; ++p) acc = std::fma(a[i * k + p], b[p * n + j], acc);
    c[i * n + j] = acc;
}

template <class T>
void transpose_into(const T* src, std::size_t rows, std::size_t cols, std::vector<T>& dst) {
    dst.resize(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) dst[r * cols + c] = src[c * rows + r];
}

void gemm_f32(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
              const float* a, const float* b, float* c, bool accumulate) {
    std::vector<float> ap, bp;
    if (trans_a) { transpose_into(a, m, k, ap); a = ap.data(); }
    if (trans_b) { transpose_into(b, k, n, bp); b = bp.data(); }
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            float32x4_t acc = accumulate ? vld1q_f32(c + i * n + j) : vdupq_n_f32(0.0f);
            for (std::size_t p = 0; p < k; ++p)
                acc = vfmaq_f32(acc, vdupq_n_f32(a[i * k + p]), vld1q_f32(b + p * n + j));
            vst1q_f32(c + i * n + j, acc);
        }
        for (; j < n; ++j) gemm_scalar_tail(a, b, c, n, k, i, j, accumulate);
    }
}

void gemm_f64(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
              const double* a, const double* b, double* c, bool accumulate) {
    std::vector<double> ap, bp;
    if (trans_a) { transpose_into(a, m, k, ap); a = ap.data(); }
    if (trans_b) { transpose_into(b, k, n, bp); b = bp.data(); }
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t j = 0;
        for (; j + 2 <= n; j += 2) {
            float64x2_t acc = accumulate ? vld1q_f64(c + i * n + j) : vdupq_n_f64(0.0);
            for (std::size_t p = 0; p < k; ++p)
                acc = vfmaq_f64(acc, vdupq_n_f64(a[i * k + p]), vld1q_f64(b + p * n + j));
            vst1q_f64(c + i * n + j, acc);
        }
        for (; j < n; ++j) gemm_scalar_tail(a, b, c, n, k, i, j, accumulate);
    }
}

void add_f32(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vaddq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_f32(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vsubq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_f32(const float* a, const float* b, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_f32(vld1q_f32(a + i), vld1q_f32(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_f32(float alpha, const float* x, float* out, std::size_t n) {
    const float32x4_t va = vdupq_n_f32(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) vst1q_f32(out + i, vmulq_f32(va, vld1q_f32(x + i)));
    for (; i < n; ++i) out[i] = alpha * x[i];
}

void accumulate_f32(const float* x, float* y, std::size_t n) { add_f32(y, x, y, n); }

void relu_f32(const float* x, float* out, std::size_t n) {
    const float32x4_t zero = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const float32x4_t v = vld1q_f32(x + i);
        vst1q_f32(out + i, vbslq_f32(vcgtq_f32(v, zero), v, zero));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_f32(const float* x, const float* g, float* out, std::size_t n) {
    const float32x4_t zero = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vst1q_f32(out + i, vbslq_f32(vcgtq_f32(vld1q_f32(x + i), zero), vld1q_f32(g + i), zero));
    for (; i < n; ++i) out[i] = x[i] > 0.0f ? g[i] : 0.0f;
}

void adam_update_f32(float* value, float* m, float* v, const float* grad, std::size_t n,
                     const AdamCoeffs<float>& k) {
    const bool decay = k.weight_decay != 0.0f;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t val = vld1q_f32(value + i);
        float32x4_t g = vld1q_f32(grad + i);
        if (decay) g = vaddq_f32(g, vmulq_f32(vdupq_n_f32(k.weight_decay), val));
        const float32x4_t mi = vaddq_f32(vmulq_f32(vdupq_n_f32(k.beta1), vld1q_f32(m + i)),
                                         vmulq_f32(vdupq_n_f32(k.one_minus_beta1), g));
        const float32x4_t vi = vaddq_f32(vmulq_f32(vdupq_n_f32(k.beta2), vld1q_f32(v + i)),
                                         vmulq_f32(vdupq_n_f32(k.one_minus_beta2), vmulq_f32(g, g)));
        vst1q_f32(m + i, mi);
        vst1q_f32(v + i, vi);
        const float32x4_t m_hat = vdivq_f32(mi, vdupq_n_f32(k.bias_correction1));
        const float32x4_t v_hat = vdivq_f32(vi, vdupq_n_f32(k.bias_correction2));
        const float32x4_t denom = vaddq_f32(vsqrtq_f32(v_hat), vdupq_n_f32(k.eps));
        val = vsubq_f32(val, vdivq_f32(vmulq_f32(vdupq_n_f32(k.lr), m_hat), denom));
        vst1q_f32(value + i, val);
    }
    for (; i < n; ++i) {
        float g = grad[i];
        if (decay) g = g + k.weight_decay * value[i];
        const float mi = k.beta1 * m[i] + k.one_minus_beta1 * g;
        const float vi = k.beta2 * v[i] + k.one_minus_beta2 * (g * g);
        m[i] = mi;
        v[i] = vi;
        const float m_hat = mi / k.bias_correction1;
        const float v_hat = vi / k.bias_correction2;
        value[i] = value[i] - (k.lr * m_hat) / (std::sqrt(v_hat) + k.eps);
    }
}

KernelTable make_table() {
    KernelTable t = scalar_table();
    t.isa = Isa::neon;
    t.f32.gemm = &gemm_f32;
    t.f32.add = &add_f32;
    t.f32.sub = &sub_f32;
    t.f32.mul = &mul_f32;
    t.f32.scale = &scale_f32;
    t.f32.accumulate = &accumulate_f32;
    t.f32.relu = &relu_f32;
    t.f32.relu_backward = &relu_backward_f32;
    t.f32.adam_update = &adam_update_f32;
    t.f64.gemm = &gemm_f64;
    return t;
}

}  // namespace

const KernelTable* neon_table() {
    static const KernelTable table = make_table();
    return &table;
}

}  // namespace secnn::detail

#else

namespace secnn::detail {
const KernelTable* neon_table() { return nullptr; }
}  // namespace secnn::detail

#endif
