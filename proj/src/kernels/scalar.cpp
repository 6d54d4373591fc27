// Reference kernels. This translation unit is compiled with
// -ffp-contract=off so no multiply-add pair is ever fused.

#include <cmath>

#include "tables.hpp"

namespace secnn::detail {
namespace {

template <class T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        if (!accumulate) {
            for (std::size_t j = 0; j < n; ++j) crow[j] = T(0);
        }
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = trans_a ? a[p * m + i] : a[i * k + p];
            if (trans_b) {
                for (std::size_t j = 0; j < n; ++j) crow[j] += aip * b[j * k + p];
            } else {
                const T* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
            }
        }
    }
}

template <class T>
void add(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <class T>
void sub(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <class T>
void mul(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <class T>
void scale(T alpha, const T* x, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}

template <class T>
void accumulate(const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

template <class T>
void relu(const T* x, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_backward(const T* x, const T* g, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? g[i] : T(0);
}

template <class T>
void adam_update(T* value, T* m, T* v, const T* grad, std::size_t n, const AdamCoeffs<T>& k) {
    for (std::size_t i = 0; i < n; ++i) {
        T g = grad[i];
        if (k.weight_decay != T(0)) g = g + k.weight_decay * value[i];
        const T mi = k.beta1 * m[i] + k.one_minus_beta1 * g;
        const T vi = k.beta2 * v[i] + k.one_minus_beta2 * (g * g);
        m[i] = mi;
        v[i] = vi;
        const T m_hat = mi / k.bias_correction1;
        const T v_hat = vi / k.bias_correction2;
        value[i] = value[i] - (k.lr * m_hat) / (std::sqrt(v_hat) + k.eps);
    }
}

template <class T>
constexpr KernelSet<T> make_set() {
    return KernelSet<T>{&gemm<T>,  &add<T>,  &sub<T>,           &mul<T>,
                        &scale<T>, &accumulate<T>, &relu<T>, &relu_backward<T>,
                        &adam_update<T>};
}

const KernelTable table{Isa::scalar, make_set<float>(), make_set<double>()};

}  // namespace

const KernelTable& scalar_table() { return table; }

}  // namespace secnn::detail
