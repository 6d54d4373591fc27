#pragma once

// Per-sample convolution lowering shared by the tensor ops and the conv2d
// autograd op.

#include <algorithm>
#include <cstddef>

#include "secnn/tensor.hpp"

namespace secnn::detail {

// One [C,H,W] sample -> [C*kh*kw, out_h*out_w].
template <class T>
inline void im2col_sample(const T* src, T* dst, std::size_t channels, std::size_t h, std::size_t w,
                 const Window& win, std::size_t out_h, std::size_t out_w) {
    const std::size_t cols = out_h * out_w;
    for (std::size_t c = 0; c < channels; ++c) {
        const T* plane = src + c * h * w;
        for (std::size_t ki = 0; ki < win.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < win.kernel_w; ++kj) {
                T* row = dst + ((c * win.kernel_h + ki) * win.kernel_w + kj) * cols;
                for (std::size_t oy = 0; oy < out_h; ++oy) {
                    const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * win.stride + ki) -
                                             static_cast<std::ptrdiff_t>(win.padding);
                    T* out_row = row + oy * out_w;
                    if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) {
                        std::fill(out_row, out_row + out_w, T(0));
                        continue;
                    }
                    const T* in_row = plane + static_cast<std::size_t>(y) * w;
                    for (std::size_t ox = 0; ox < out_w; ++ox) {
                        const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * win.stride + kj) -
                                                 static_cast<std::ptrdiff_t>(win.padding);
                        out_row[ox] = (x < 0 || x >= static_cast<std::ptrdiff_t>(w))
                                          ? T(0)
                                          : in_row[static_cast<std::size_t>(x)];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col_sample; adds into dst.
template <class T>
inline void col2im_sample(const T* src, T* dst, std::size_t channels, std::size_t h, std::size_t w,
                 const Window& win, std::size_t out_h, std::size_t out_w) {
    const std::size_t cols = out_h * out_w;
    for (std::size_t c = 0; c < channels; ++c) {
        T* plane = dst + c * h * w;
        for (std::size_t ki = 0; ki < win.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < win.kernel_w; ++kj) {
                const T* row = src + ((c * win.kernel_h + ki) * win.kernel_w + kj) * cols;
                for (std::size_t oy = 0; oy < out_h; ++oy) {
                    const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * win.stride + ki) -
                                             static_cast<std::ptrdiff_t>(win.padding);
                    if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
                    T* out_row = plane + static_cast<std::size_t>(y) * w;
                    for (std::size_t ox = 0; ox < out_w; ++ox) {
                        const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * win.stride + kj) -
                                                 static_cast<std::ptrdiff_t>(win.padding);
                        if (x < 0 || x >= static_cast<std::ptrdiff_t>(w)) continue;
                        out_row[static_cast<std::size_t>(x)] += row[oy * out_w + ox];
                    }
                }
            }
        }
    }
}

}  // namespace secnn::detail
