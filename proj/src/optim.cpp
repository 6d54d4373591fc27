#include "secnn/optim.hpp"

#include <cmath>

#include "secnn/kernels.hpp"

namespace secnn {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)), config_(config), m_(params_.size()), v_(params_.size()) {
    if (!(config_.lr > 0.0)) fail(ErrorKind::InvalidConfig, "learning rate must be positive");
    if (!(config_.beta1 > 0.0 && config_.beta1 < 1.0) || !(config_.beta2 > 0.0 && config_.beta2 < 1.0))
        fail(ErrorKind::InvalidConfig, "Adam betas must lie in (0,1)");
    if (!(config_.eps > 0.0)) fail(ErrorKind::InvalidConfig, "Adam eps must be positive");
    if (!(config_.weight_decay >= 0.0)) fail(ErrorKind::InvalidConfig, "weight decay must be nonnegative");
}

void Adam::ensure_state(std::size_t i) {
    const Tensor& value = params_[i]->value();
    if (m_[i].shape() != value.shape() || m_[i].dtype() != value.dtype()) {
        m_[i] = Tensor(value.shape(), value.dtype());
        v_[i] = Tensor(value.shape(), value.dtype());
    }
}

void Adam::step() {
    for (Parameter* p : params_)
        if (p->trainable() && !p->grad_touched())
            fail(ErrorKind::MissingGrad, "trainable parameter " + p->name() + " has no gradient");
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = *params_[i];
        if (!p.trainable()) continue;
        ensure_state(i);
        const double wd = p.decay_eligible() ? config_.weight_decay : 0.0;
        visit_dtype(p.value().dtype(), [&](auto tag) {
            using T = decltype(tag);
            AdamCoeffs<T> c{T(config_.lr), T(config_.beta1), T(config_.beta2), T(1.0 - config_.beta1),
                            T(1.0 - config_.beta2), T(bc1), T(bc2), T(config_.eps), T(wd)};
            kernels<T>().adam_update(p.value().mutable_data<T>().data(), m_[i].mutable_data<T>().data(),
                                     v_[i].mutable_data<T>().data(), p.grad().data<T>().data(), p.numel(), c);
        });
    }
}

void Adam::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

void Adam::restore(std::uint64_t steps, std::vector<Tensor> m, std::vector<Tensor> v) {
    if (m.size() != params_.size() || v.size() != params_.size())
        fail(ErrorKind::CorruptCheckpoint, "optimizer state does not match the parameter list");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (m[i].shape() != params_[i]->shape() || v[i].shape() != params_[i]->shape())
            fail(ErrorKind::CorruptCheckpoint, "optimizer state shape mismatch for " + params_[i]->name());
        const DType dt = params_[i]->value().dtype();
        m_[i] = m[i].to(dt);
        v_[i] = v[i].to(dt);
    }
    t_ = steps;
}

// ---- loss ----------------------------------------------------------------------

namespace {

void check_logits(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) fail(ErrorKind::ShapeMismatch, "logits must be [N,K], got " + shape_str(logits.shape()));
    if (labels.size() != logits.shape()[0])
        fail(ErrorKind::ShapeMismatch, std::to_string(labels.size()) + " labels for " + shape_str(logits.shape()));
    const int k = static_cast<int>(logits.shape()[1]);
    for (int y : labels)
        if (y < 0 || y >= k)
            fail(ErrorKind::LabelOutOfRange, "label " + std::to_string(y) + " outside [0," + std::to_string(k) + ")");
}

// Softmax of one row into p (double), returning log-sum-exp of the row.
template <class T>
double softmax_row(const T* row, std::size_t k, double* p) {
    double mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        p[j] = std::exp(static_cast<double>(row[j]) - mx);
        s += p[j];
    }
    for (std::size_t j = 0; j < k; ++j) p[j] /= s;
    return mx + std::log(s);
}

}  // namespace

CrossEntropyResult cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    check_logits(logits, labels);
    const std::size_t n = logits.shape()[0], k = logits.shape()[1];
    CrossEntropyResult r;
    r.dlogits = Tensor(logits.shape(), logits.dtype());
    visit_dtype(logits.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto x = logits.data<T>();
        auto d = r.dlogits.mutable_data<T>();
        std::vector<double> p(k);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double lse = softmax_row(x.data() + i * k, k, p.data());
            total += lse - static_cast<double>(x[i * k + labels[i]]);
            for (std::size_t j = 0; j < k; ++j) {
                const double onehot = static_cast<int>(j) == labels[i] ? 1.0 : 0.0;
                d[i * k + j] = static_cast<T>((p[j] - onehot) / static_cast<double>(n));
            }
        }
        r.loss = total / static_cast<double>(n);
    });
    return r;
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 2) fail(ErrorKind::ShapeMismatch, "softmax expects [N,K], got " + shape_str(logits.shape()));
    const std::size_t n = logits.shape()[0], k = logits.shape()[1];
    Tensor out(logits.shape(), logits.dtype());
    visit_dtype(logits.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto x = logits.data<T>();
        auto o = out.mutable_data<T>();
        std::vector<double> p(k);
        for (std::size_t i = 0; i < n; ++i) {
            softmax_row(x.data() + i * k, k, p.data());
            for (std::size_t j = 0; j < k; ++j) o[i * k + j] = static_cast<T>(p[j]);
        }
    });
    return out;
}

namespace ops {

Var cross_entropy(const Var& logits, const std::vector<int>& labels) {
    Tape* t = logits.tape();
    if (!t) fail(ErrorKind::DetachedLoss, "cross_entropy on an unbound Var");
    CrossEntropyResult r = secnn::cross_entropy(logits.value(), labels);
    Tensor d = r.dlogits;
    return t->record(Tensor::scalar(r.loss, logits.dtype()), {logits},
                     [logits, d](Tape& tp, const Tensor& g) { tp.accumulate(logits, secnn::scale(d, g.item())); });
}

}  // namespace ops

}  // namespace secnn
