#pragma once

#include <cstdint>
#include <vector>

#include "secnn/autograd.hpp"

namespace secnn {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    // Coupled (L2) decay, applied only to decay-eligible parameters.
    double weight_decay = 1e-4;
};

// Adam with selective weight decay:
//   g = grad + wd * value   (decay-eligible weights only)
//   m = b1 m + (1-b1) g;  v = b2 v + (1-b2) g^2
//   value -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
// Frozen parameters are never touched.
class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamConfig config);

    // Throws MissingGrad if a trainable parameter received no gradient since
    // the last zero_grad().
    void step();
    void zero_grad();

    std::uint64_t steps() const noexcept { return t_; }
    const AdamConfig& config() const noexcept { return config_; }
    void set_lr(double lr) noexcept { config_.lr = lr; }

    // Moment estimates for params()[i] (zero-filled until the first step).
    const Tensor& first_moment(std::size_t i) const { return m_.at(i); }
    const Tensor& second_moment(std::size_t i) const { return v_.at(i); }
    const std::vector<Parameter*>& params() const noexcept { return params_; }

    // Checkpoint support.
    void restore(std::uint64_t steps, std::vector<Tensor> m, std::vector<Tensor> v);

private:
    void ensure_state(std::size_t i);

    std::vector<Parameter*> params_;
    AdamConfig config_;
    std::uint64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

struct CrossEntropyResult {
    double loss = 0.0;
    Tensor dlogits;  // (softmax - onehot) / N, dtype of the logits
};

// Mean softmax cross-entropy over rows of logits [N,K], computed with the
// max shift. Throws LabelOutOfRange.
CrossEntropyResult cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// Row-wise softmax of [N,K] (max-shifted).
Tensor softmax(const Tensor& logits);

namespace ops {
// Differentiable version; the backward rule is the fused (p - y)/N.
Var cross_entropy(const Var& logits, const std::vector<int>& labels);
}  // namespace ops

}  // namespace secnn
