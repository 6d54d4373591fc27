#pragma once

// Differentiable primitives recorded on a Tape. Every op takes its inputs as
// Vars from the same tape and returns a Var on that tape.

#include <optional>
#include <random>
#include <vector>

#include "secnn/autograd.hpp"

namespace secnn::ops {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double alpha);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);

Var matmul(const Var& a, const Var& b);
Var reshape(const Var& x, Shape shape);
Var sum(const Var& x, std::vector<std::size_t> axes, bool keep_dims = false);
Var mean(const Var& x, std::vector<std::size_t> axes, bool keep_dims = false);

// x [N,in], weight [out,in], bias [out] -> [N,out]
Var linear(const Var& x, const Var& weight, const std::optional<Var>& bias);

// x [N,Cin,H,W], weight [Cout,Cin,kh,kw], bias [Cout] -> [N,Cout,Hout,Wout].
// Lowered to im2col + GEMM one sample at a time.
Var conv2d(const Var& x, const Var& weight, const std::optional<Var>& bias, std::size_t stride,
           std::size_t padding);

struct BatchNormConfig {
    double eps = 1e-5;
    double momentum = 0.1;
};

// Per-channel normalization of [N,C,H,W]. In train mode normalizes with the
// batch statistics (biased variance), updates the running buffers in place
// (unbiased variance, as is conventional) and differentiates through the
// statistics. In eval mode uses the running buffers.
Var batch_norm2d(const Var& x, const Var& scale, const Var& shift, Tensor& running_mean,
                 Tensor& running_var, Mode mode, const BatchNormConfig& config);

Var max_pool2d(const Var& x, std::size_t kernel, std::size_t stride, std::size_t padding);
// Output cell i covers [floor(i*H/out), ceil((i+1)*H/out)).
Var adaptive_avg_pool2d(const Var& x, std::size_t out_h, std::size_t out_w);
// [N,C,H,W] -> [N,C]
Var global_avg_pool(const Var& x);

// Inverted dropout. Identity when p == 0 or mode is eval; the sampled mask
// is kept on the tape so backward is exact for the sampled network.
Var dropout(const Var& x, double p, Mode mode, std::mt19937_64& rng);
// Drops whole [n,c] feature maps of an [N,C,H,W] input.
Var dropout2d(const Var& x, double p, Mode mode, std::mt19937_64& rng);

}  // namespace secnn::ops
