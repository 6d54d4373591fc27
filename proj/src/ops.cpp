#include "secnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "lowering.hpp"
#include "secnn/kernels.hpp"

namespace secnn::ops {
namespace {

Tape& tape_of(const Var& a) {
    if (!a.tape()) fail(ErrorKind::DetachedLoss, "op on an unbound Var");
    return *a.tape();
}

Tape& tape_of(const Var& a, const Var& b) {
    Tape& t = tape_of(a);
    if (b.tape() != &t) fail(ErrorKind::DetachedLoss, "operands recorded on different tapes");
    return t;
}

// Expands a keep-dims gradient back over the reduced axes.
Tensor broadcast_to(const Tensor& g, const Shape& shape) {
    if (g.shape() == shape) return g;
    return secnn::add(Tensor::zeros(shape, g.dtype()), g);
}

Shape keep_dims_shape(const Shape& in, const std::vector<std::size_t>& axes) {
    Shape out = in;
    for (std::size_t a : axes) out[a] = 1;
    return out;
}

void require_rank(const Var& x, std::size_t rank, const char* op) {
    if (x.value().rank() != rank)
        fail(ErrorKind::ShapeMismatch, std::string(op) + " expects rank " + std::to_string(rank) + ", got " +
                                           shape_str(x.shape()));
}

}  // namespace

// ---- elementwise ---------------------------------------------------------

Var add(const Var& a, const Var& b) {
    Tape& t = tape_of(a, b);
    const Shape sa = a.shape(), sb = b.shape();
    return t.record(secnn::add(a.value(), b.value()), {a, b}, [a, b, sa, sb](Tape& tp, const Tensor& g) {
        tp.accumulate(a, sum_to(g, sa));
        tp.accumulate(b, sum_to(g, sb));
    });
}

Var sub(const Var& a, const Var& b) {
    Tape& t = tape_of(a, b);
    const Shape sa = a.shape(), sb = b.shape();
    return t.record(secnn::sub(a.value(), b.value()), {a, b}, [a, b, sa, sb](Tape& tp, const Tensor& g) {
        tp.accumulate(a, sum_to(g, sa));
        if (b.requires_grad()) tp.accumulate(b, sum_to(secnn::scale(g, -1.0), sb));
    });
}

Var mul(const Var& a, const Var& b) {
    Tape& t = tape_of(a, b);
    const Tensor va = a.value(), vb = b.value();
    return t.record(secnn::mul(va, vb), {a, b}, [a, b, va, vb](Tape& tp, const Tensor& g) {
        if (a.requires_grad()) tp.accumulate(a, sum_to(secnn::mul(g, vb), va.shape()));
        if (b.requires_grad()) tp.accumulate(b, sum_to(secnn::mul(g, va), vb.shape()));
    });
}

Var scale(const Var& a, double alpha) {
    Tape& t = tape_of(a);
    return t.record(secnn::scale(a.value(), alpha), {a},
                    [a, alpha](Tape& tp, const Tensor& g) { tp.accumulate(a, secnn::scale(g, alpha)); });
}

Var relu(const Var& x) {
    Tape& t = tape_of(x);
    const Tensor vx = x.value();
    return t.record(secnn::relu(vx), {x}, [x, vx](Tape& tp, const Tensor& g) {
        Tensor dx(vx.shape(), vx.dtype());
        visit_dtype(vx.dtype(), [&](auto tag) {
            using T = decltype(tag);
            kernels<T>().relu_backward(vx.data<T>().data(), g.data<T>().data(), dx.mutable_data<T>().data(),
                                       vx.numel());
        });
        tp.accumulate(x, dx);
    });
}

Var sigmoid(const Var& x) {
    Tape& t = tape_of(x);
    Tensor y = secnn::sigmoid(x.value());
    return t.record(y, {x}, [x, y](Tape& tp, const Tensor& g) {
        Tensor dx(y.shape(), y.dtype());
        visit_dtype(y.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto py = y.data<T>();
            auto pg = g.data<T>();
            auto pd = dx.mutable_data<T>();
            for (std::size_t i = 0; i < pd.size(); ++i) pd[i] = pg[i] * py[i] * (T(1) - py[i]);
        });
        tp.accumulate(x, dx);
    });
}

Var exp(const Var& x) {
    Tape& t = tape_of(x);
    Tensor y = secnn::exp(x.value());
    return t.record(y, {x}, [x, y](Tape& tp, const Tensor& g) { tp.accumulate(x, secnn::mul(g, y)); });
}

Var log(const Var& x) {
    Tape& t = tape_of(x);
    const Tensor vx = x.value();
    return t.record(secnn::log(vx), {x}, [x, vx](Tape& tp, const Tensor& g) { tp.accumulate(x, secnn::div(g, vx)); });
}

// ---- shape / reductions --------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    Tape& t = tape_of(a, b);
    const Tensor va = a.value(), vb = b.value();
    return t.record(secnn::matmul(va, vb), {a, b}, [a, b, va, vb](Tape& tp, const Tensor& g) {
        const std::size_t m = va.shape()[0], k = va.shape()[1], n = vb.shape()[1];
        visit_dtype(va.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const auto& kern = kernels<T>();
            if (a.requires_grad()) {
                Tensor da({m, k}, va.dtype());
                kern.gemm(false, true, m, k, n, g.data<T>().data(), vb.data<T>().data(),
                          da.mutable_data<T>().data(), false);
                tp.accumulate(a, da);
            }
            if (b.requires_grad()) {
                Tensor db({k, n}, vb.dtype());
                kern.gemm(true, false, k, n, m, va.data<T>().data(), g.data<T>().data(),
                          db.mutable_data<T>().data(), false);
                tp.accumulate(b, db);
            }
        });
    });
}

Var reshape(const Var& x, Shape shape) {
    Tape& t = tape_of(x);
    const Shape in = x.shape();
    return t.record(x.value().reshape(std::move(shape)), {x},
                    [x, in](Tape& tp, const Tensor& g) { tp.accumulate(x, g.reshape(in)); });
}

Var sum(const Var& x, std::vector<std::size_t> axes, bool keep_dims) {
    Tape& t = tape_of(x);
    const Shape in = x.shape();
    Tensor y = reduce(ReduceOp::sum, x.value(), axes, keep_dims);
    const Shape kept = keep_dims_shape(in, axes);
    return t.record(y, {x}, [x, in, kept](Tape& tp, const Tensor& g) {
        tp.accumulate(x, broadcast_to(g.reshape(kept), in));
    });
}

Var mean(const Var& x, std::vector<std::size_t> axes, bool keep_dims) {
    Tape& t = tape_of(x);
    const Shape in = x.shape();
    Tensor y = reduce(ReduceOp::mean, x.value(), axes, keep_dims);
    std::size_t count = 1;
    for (std::size_t a : axes) count *= in.at(a);
    const Shape kept = keep_dims_shape(in, axes);
    return t.record(y, {x}, [x, in, kept, count](Tape& tp, const Tensor& g) {
        tp.accumulate(x, broadcast_to(secnn::scale(g, 1.0 / static_cast<double>(count)).reshape(kept), in));
    });
}

// ---- linear / conv -------------------------------------------------------

Var linear(const Var& x, const Var& weight, const std::optional<Var>& bias) {
    Tape& t = tape_of(x, weight);
    require_rank(x, 2, "linear");
    require_rank(weight, 2, "linear weight");
    const Tensor vx = x.value(), vw = weight.value();
    const std::size_t n = vx.shape()[0], in = vx.shape()[1], out = vw.shape()[0];
    if (vw.shape()[1] != in)
        fail(ErrorKind::ShapeMismatch, "linear input " + shape_str(vx.shape()) + " vs weight " + shape_str(vw.shape()));
    if (vx.dtype() != vw.dtype()) fail(ErrorKind::DtypeMismatch, "linear operands differ in dtype");
    Tensor y({n, out}, vx.dtype());
    std::optional<Tensor> vb;
    if (bias) {
        if (bias->shape() != Shape{out}) fail(ErrorKind::ShapeMismatch, "linear bias " + shape_str(bias->shape()));
        vb = bias->value();
    }
    visit_dtype(vx.dtype(), [&](auto tag) {
        using T = decltype(tag);
        T* py = y.mutable_data<T>().data();
        kernels<T>().gemm(false, true, n, out, in, vx.data<T>().data(), vw.data<T>().data(), py, false);
        if (vb) {
            auto pb = vb->data<T>();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < out; ++j) py[i * out + j] += pb[j];
        }
    });
    auto backward = [x, weight, bias, vx, vw, n, in, out](Tape& tp, const Tensor& g) {
        visit_dtype(vx.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const auto& kern = kernels<T>();
            const T* pg = g.data<T>().data();
            if (x.requires_grad()) {
                Tensor dx({n, in}, vx.dtype());
                kern.gemm(false, false, n, in, out, pg, vw.data<T>().data(), dx.mutable_data<T>().data(), false);
                tp.accumulate(x, dx);
            }
            if (weight.requires_grad()) {
                Tensor dw({out, in}, vw.dtype());
                kern.gemm(true, false, out, in, n, pg, vx.data<T>().data(), dw.mutable_data<T>().data(), false);
                tp.accumulate(weight, dw);
            }
            if (bias && bias->requires_grad()) {
                Tensor db({out}, vx.dtype());
                auto pdb = db.mutable_data<T>();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < out; ++j) pdb[j] += pg[i * out + j];
                tp.accumulate(*bias, db);
            }
        });
    };
    if (bias) return t.record(y, {x, weight, *bias}, backward);
    return t.record(y, {x, weight}, backward);
}

Var conv2d(const Var& x, const Var& weight, const std::optional<Var>& bias, std::size_t stride,
           std::size_t padding) {
    Tape& t = tape_of(x, weight);
    require_rank(x, 4, "conv2d");
    require_rank(weight, 4, "conv2d weight");
    const Tensor vx = x.value(), vw = weight.value();
    const Shape xs = vx.shape(), ws = vw.shape();
    const std::size_t n = xs[0], cin = xs[1], h = xs[2], w = xs[3];
    const std::size_t cout = ws[0];
    if (ws[1] != cin)
        fail(ErrorKind::ShapeMismatch, "conv2d input " + shape_str(xs) + " vs weight " + shape_str(ws));
    if (vx.dtype() != vw.dtype()) fail(ErrorKind::DtypeMismatch, "conv2d operands differ in dtype");
    const Window win{ws[2], ws[3], stride, padding};
    const std::size_t oh = conv_out_extent(h, win.kernel_h, stride, padding);
    const std::size_t ow = conv_out_extent(w, win.kernel_w, stride, padding);
    const std::size_t kdim = cin * win.kernel_h * win.kernel_w;
    const std::size_t hw = oh * ow;
    // A 1x1/stride-1/unpadded window is its own column matrix.
    const bool direct = win.kernel_h == 1 && win.kernel_w == 1 && stride == 1 && padding == 0;
    std::optional<Tensor> vb;
    if (bias) {
        if (bias->shape() != Shape{cout}) fail(ErrorKind::ShapeMismatch, "conv2d bias " + shape_str(bias->shape()));
        vb = bias->value();
    }

    Tensor y({n, cout, oh, ow}, vx.dtype());
    visit_dtype(vx.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const auto& kern = kernels<T>();
        const T* px = vx.data<T>().data();
        const T* pw = vw.data<T>().data();
        T* py = y.mutable_data<T>().data();
        std::vector<T> cols(direct ? 0 : kdim * hw);
        for (std::size_t i = 0; i < n; ++i) {
            const T* sample = px + i * cin * h * w;
            const T* colp = sample;
            if (!direct) {
                detail::im2col_sample(sample, cols.data(), cin, h, w, win, oh, ow);
                colp = cols.data();
            }
            kern.gemm(false, false, cout, hw, kdim, pw, colp, py + i * cout * hw, false);
            if (vb) {
                auto pb = vb->data<T>();
                for (std::size_t c = 0; c < cout; ++c) {
                    T* plane = py + (i * cout + c) * hw;
                    for (std::size_t j = 0; j < hw; ++j) plane[j] += pb[c];
                }
            }
        }
    });

    auto backward = [x, weight, bias, vx, vw, xs, win, n, cin, h, w, cout, oh, ow, kdim, hw, direct](
                        Tape& tp, const Tensor& g) {
        visit_dtype(vx.dtype(), [&](auto tag) {
            using T = decltype(tag);
            const auto& kern = kernels<T>();
            const T* px = vx.data<T>().data();
            const T* pw = vw.data<T>().data();
            const T* pg = g.data<T>().data();
            const bool want_x = x.requires_grad();
            const bool want_w = weight.requires_grad();
            std::optional<Tensor> dx, dw;
            if (want_x) dx = Tensor(xs, vx.dtype());
            if (want_w) dw = Tensor(vw.shape(), vw.dtype());
            std::vector<T> cols(direct ? 0 : kdim * hw);
            std::vector<T> dcols(want_x && !direct ? kdim * hw : 0);
            for (std::size_t i = 0; i < n; ++i) {
                const T* gi = pg + i * cout * hw;
                const T* sample = px + i * cin * h * w;
                if (want_w) {
                    const T* colp = sample;
                    if (!direct) {
                        detail::im2col_sample(sample, cols.data(), cin, h, w, win, oh, ow);
                        colp = cols.data();
                    }
                    kern.gemm(false, true, cout, kdim, hw, gi, colp, dw->template mutable_data<T>().data(), i > 0);
                }
                if (want_x) {
                    T* dxi = dx->template mutable_data<T>().data() + i * cin * h * w;
                    if (direct) {
                        kern.gemm(true, false, kdim, hw, cout, pw, gi, dxi, false);
                    } else {
                        kern.gemm(true, false, kdim, hw, cout, pw, gi, dcols.data(), false);
                        detail::col2im_sample(dcols.data(), dxi, cin, h, w, win, oh, ow);
                    }
                }
            }
            if (want_x) tp.accumulate(x, *dx);
            if (want_w) tp.accumulate(weight, *dw);
            if (bias && bias->requires_grad()) {
                Tensor db({cout}, vx.dtype());
                auto pdb = db.mutable_data<T>();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t c = 0; c < cout; ++c) {
                        const T* plane = pg + (i * cout + c) * hw;
                        T acc = T(0);
                        for (std::size_t j = 0; j < hw; ++j) acc += plane[j];
                        pdb[c] += acc;
                    }
                tp.accumulate(*bias, db);
            }
        });
    };
    if (bias) return t.record(y, {x, weight, *bias}, backward);
    return t.record(y, {x, weight}, backward);
}

// ---- batch norm ----------------------------------------------------------

Var batch_norm2d(const Var& x, const Var& scale, const Var& shift, Tensor& running_mean,
                 Tensor& running_var, Mode mode, const BatchNormConfig& config) {
    Tape& t = tape_of(x, scale);
    require_rank(x, 4, "batch_norm2d");
    const Tensor vx = x.value();
    const Shape xs = vx.shape();
    const std::size_t n = xs[0], c = xs[1], hw = xs[2] * xs[3];
    const std::size_t count = n * hw;
    if (scale.shape() != Shape{c} || shift.shape() != Shape{c} || running_mean.shape() != Shape{c} ||
        running_var.shape() != Shape{c})
        fail(ErrorKind::ShapeMismatch, "batch_norm2d channel count mismatch for input " + shape_str(xs));
    const bool training = mode == Mode::train;
    if (training && count < 2)
        fail(ErrorKind::ShapeMismatch, "batch_norm2d in train mode needs more than one value per channel");

    const Tensor vs = scale.value(), vb = shift.value();
    Tensor y(xs, vx.dtype());
    Tensor xhat(xs, vx.dtype());
    Tensor inv_std({c}, vx.dtype());

    visit_dtype(vx.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto px = vx.data<T>();
        auto py = y.mutable_data<T>();
        auto ph = xhat.mutable_data<T>();
        auto pis = inv_std.mutable_data<T>();
        auto pgamma = vs.data<T>();
        auto pbeta = vb.data<T>();
        auto prm = running_mean.mutable_data<T>();
        auto prv = running_var.mutable_data<T>();
        const T eps = static_cast<T>(config.eps);
        const T momentum = static_cast<T>(config.momentum);
        for (std::size_t ch = 0; ch < c; ++ch) {
            T mu, var;
            if (training) {
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const T* plane = px.data() + (i * c + ch) * hw;
                    for (std::size_t j = 0; j < hw; ++j) s += plane[j];
                }
                const double m = s / static_cast<double>(count);
                double ss = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const T* plane = px.data() + (i * c + ch) * hw;
                    for (std::size_t j = 0; j < hw; ++j) {
                        const double d = plane[j] - m;
                        ss += d * d;
                    }
                }
                mu = static_cast<T>(m);
                var = static_cast<T>(ss / static_cast<double>(count));
                const T unbiased = static_cast<T>(ss / static_cast<double>(count - 1));
                prm[ch] = (T(1) - momentum) * prm[ch] + momentum * mu;
                prv[ch] = (T(1) - momentum) * prv[ch] + momentum * unbiased;
            } else {
                mu = prm[ch];
                var = prv[ch];
            }
            const T is = T(1) / std::sqrt(var + eps);
            pis[ch] = is;
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t off = (i * c + ch) * hw;
                for (std::size_t j = 0; j < hw; ++j) {
                    const T xh = (px[off + j] - mu) * is;
                    ph[off + j] = xh;
                    py[off + j] = pgamma[ch] * xh + pbeta[ch];
                }
            }
        }
    });

    return t.record(y, {x, scale, shift}, [x, scale, shift, xhat, inv_std, vs, n, c, hw, count, training](
                                             Tape& tp, const Tensor& g) {
        visit_dtype(xhat.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto pg = g.data<T>();
            auto ph = xhat.data<T>();
            auto pis = inv_std.data<T>();
            auto pgamma = vs.data<T>();
            Tensor dgamma({c}, xhat.dtype()), dbeta({c}, xhat.dtype());
            auto pdg = dgamma.mutable_data<T>();
            auto pdb = dbeta.mutable_data<T>();
            std::optional<Tensor> dx;
            if (x.requires_grad()) dx = Tensor(xhat.shape(), xhat.dtype());
            for (std::size_t ch = 0; ch < c; ++ch) {
                double sum_g = 0.0, sum_gx = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t off = (i * c + ch) * hw;
                    for (std::size_t j = 0; j < hw; ++j) {
                        sum_g += pg[off + j];
                        sum_gx += static_cast<double>(pg[off + j]) * ph[off + j];
                    }
                }
                pdg[ch] = static_cast<T>(sum_gx);
                pdb[ch] = static_cast<T>(sum_g);
                if (!dx) continue;
                auto pdx = dx->template mutable_data<T>();
                const T k = pgamma[ch] * pis[ch];
                if (training) {
                    // dx = gamma*inv_std/M * (M*g - sum(g) - xhat*sum(g*xhat))
                    const T mean_g = static_cast<T>(sum_g / static_cast<double>(count));
                    const T mean_gx = static_cast<T>(sum_gx / static_cast<double>(count));
                    for (std::size_t i = 0; i < n; ++i) {
                        const std::size_t off = (i * c + ch) * hw;
                        for (std::size_t j = 0; j < hw; ++j)
                            pdx[off + j] = k * (pg[off + j] - mean_g - ph[off + j] * mean_gx);
                    }
                } else {
                    for (std::size_t i = 0; i < n; ++i) {
                        const std::size_t off = (i * c + ch) * hw;
                        for (std::size_t j = 0; j < hw; ++j) pdx[off + j] = k * pg[off + j];
                    }
                }
            }
            if (dx) tp.accumulate(x, *dx);
            tp.accumulate(scale, dgamma);
            tp.accumulate(shift, dbeta);
        });
    });
}

// ---- pooling -------------------------------------------------------------

Var max_pool2d(const Var& x, std::size_t kernel, std::size_t stride, std::size_t padding) {
    Tape& t = tape_of(x);
    require_rank(x, 4, "max_pool2d");
    const Tensor vx = x.value();
    const Shape xs = vx.shape();
    const std::size_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
    const std::size_t oh = conv_out_extent(h, kernel, stride, padding);
    const std::size_t ow = conv_out_extent(w, kernel, stride, padding);
    Tensor y({n, c, oh, ow}, vx.dtype());
    auto argmax = std::make_shared<std::vector<std::size_t>>(n * c * oh * ow);
    visit_dtype(vx.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto px = vx.data<T>();
        auto py = y.mutable_data<T>();
        std::size_t o = 0;
        for (std::size_t p = 0; p < n * c; ++p) {
            const std::size_t base = p * h * w;
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::size_t best_idx = base;
                    bool found = false;
                    for (std::size_t ky = 0; ky < kernel; ++ky) {
                        const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                                  static_cast<std::ptrdiff_t>(padding);
                        if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
                        for (std::size_t kx = 0; kx < kernel; ++kx) {
                            const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                                      static_cast<std::ptrdiff_t>(padding);
                            if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
                            const std::size_t idx = base + static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx);
                            if (!found || px[idx] > best) {
                                best = px[idx];
                                best_idx = idx;
                                found = true;
                            }
                        }
                    }
                    py[o] = best;
                    (*argmax)[o] = best_idx;
                }
        }
    });
    return t.record(y, {x}, [x, xs, argmax](Tape& tp, const Tensor& g) {
        Tensor dx(xs, g.dtype());
        visit_dtype(g.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto pg = g.data<T>();
            auto pdx = dx.mutable_data<T>();
            for (std::size_t o = 0; o < pg.size(); ++o) pdx[(*argmax)[o]] += pg[o];
        });
        tp.accumulate(x, dx);
    });
}

Var adaptive_avg_pool2d(const Var& x, std::size_t out_h, std::size_t out_w) {
    Tape& t = tape_of(x);
    require_rank(x, 4, "adaptive_avg_pool2d");
    if (out_h == 0 || out_w == 0) fail(ErrorKind::ShapeMismatch, "adaptive pool output extent must be positive");
    const Tensor vx = x.value();
    const Shape xs = vx.shape();
    const std::size_t n = xs[0], c = xs[1], h = xs[2], w = xs[3];
    auto cell = [](std::size_t i, std::size_t in, std::size_t out) {
        const std::size_t lo = (i * in) / out;
        const std::size_t hi = ((i + 1) * in + out - 1) / out;
        return std::pair{lo, hi};
    };
    Tensor y({n, c, out_h, out_w}, vx.dtype());
    visit_dtype(vx.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto px = vx.data<T>();
        auto py = y.mutable_data<T>();
        for (std::size_t p = 0; p < n * c; ++p)
            for (std::size_t oy = 0; oy < out_h; ++oy) {
                const auto [y0, y1] = cell(oy, h, out_h);
                for (std::size_t ox = 0; ox < out_w; ++ox) {
                    const auto [x0, x1] = cell(ox, w, out_w);
                    T acc = T(0);
                    for (std::size_t yy = y0; yy < y1; ++yy)
                        for (std::size_t xx = x0; xx < x1; ++xx) acc += px[p * h * w + yy * w + xx];
                    py[(p * out_h + oy) * out_w + ox] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
                }
            }
    });
    return t.record(y, {x}, [x, xs, out_h, out_w, cell](Tape& tp, const Tensor& g) {
        const std::size_t h = xs[2], w = xs[3];
        Tensor dx(xs, g.dtype());
        visit_dtype(g.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto pg = g.data<T>();
            auto pdx = dx.mutable_data<T>();
            for (std::size_t p = 0; p < xs[0] * xs[1]; ++p)
                for (std::size_t oy = 0; oy < out_h; ++oy) {
                    const auto [y0, y1] = cell(oy, h, out_h);
                    for (std::size_t ox = 0; ox < out_w; ++ox) {
                        const auto [x0, x1] = cell(ox, w, out_w);
                        const T share = pg[(p * out_h + oy) * out_w + ox] / static_cast<T>((y1 - y0) * (x1 - x0));
                        for (std::size_t yy = y0; yy < y1; ++yy)
                            for (std::size_t xx = x0; xx < x1; ++xx) pdx[p * h * w + yy * w + xx] += share;
                    }
                }
        });
        tp.accumulate(x, dx);
    });
}

Var global_avg_pool(const Var& x) {
    require_rank(x, 4, "global_avg_pool");
    return mean(x, {2, 3}, false);
}

// ---- dropout -------------------------------------------------------------

namespace {

Var apply_mask(const Var& x, Tensor mask) {
    Tape& t = tape_of(x);
    return t.record(secnn::mul(x.value(), mask), {x},
                    [x, mask](Tape& tp, const Tensor& g) { tp.accumulate(x, secnn::mul(g, mask)); });
}

void check_rate(double p) {
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::InvalidConfig, "dropout rate " + std::to_string(p) + " outside [0,1]");
}

}  // namespace

Var dropout(const Var& x, double p, Mode mode, std::mt19937_64& rng) {
    check_rate(p);
    if (mode == Mode::eval || p == 0.0) return x;
    const double keep_scale = p < 1.0 ? 1.0 / (1.0 - p) : 0.0;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> m(x.value().numel());
    for (auto& v : m) v = u(rng) < p ? 0.0 : keep_scale;
    return apply_mask(x, Tensor::from_values(x.shape(), m, x.dtype()));
}

Var dropout2d(const Var& x, double p, Mode mode, std::mt19937_64& rng) {
    check_rate(p);
    require_rank(x, 4, "dropout2d");
    if (mode == Mode::eval || p == 0.0) return x;
    const Shape xs = x.shape();
    const double keep_scale = p < 1.0 ? 1.0 / (1.0 - p) : 0.0;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> m(xs[0] * xs[1]);
    for (auto& v : m) v = u(rng) < p ? 0.0 : keep_scale;
    return apply_mask(x, Tensor::from_values({xs[0], xs[1], 1, 1}, m, x.dtype()));
}

}  // namespace secnn::ops
