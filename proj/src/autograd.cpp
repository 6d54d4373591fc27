#include "secnn/autograd.hpp"

#include "secnn/kernels.hpp"

namespace secnn {

// ---- Parameter -----------------------------------------------------------

Parameter::Parameter(std::string name, Shape shape, ParamRole role)
    : name_(std::move(name)), shape_(std::move(shape)), role_(role) {}

void Parameter::materialize(DType dtype) {
    if (materialized_ && value_.dtype() == dtype) return;
    value_ = Tensor(shape_, dtype);
    grad_ = Tensor(shape_, dtype);
    materialized_ = true;
    grad_touched_ = false;
}

void Parameter::convert(DType dtype) {
    if (!materialized_) {
        materialize(dtype);
        return;
    }
    value_ = value_.to(dtype);
    grad_ = grad_.to(dtype);
}

Tensor& Parameter::value() {
    if (!materialized_) fail(ErrorKind::InvalidConfig, "parameter " + name_ + " is not materialized");
    return value_;
}

const Tensor& Parameter::value() const {
    if (!materialized_) fail(ErrorKind::InvalidConfig, "parameter " + name_ + " is not materialized");
    return value_;
}

Tensor& Parameter::grad() {
    if (!materialized_) fail(ErrorKind::InvalidConfig, "parameter " + name_ + " is not materialized");
    return grad_;
}

const Tensor& Parameter::grad() const {
    if (!materialized_) fail(ErrorKind::InvalidConfig, "parameter " + name_ + " is not materialized");
    return grad_;
}

void Parameter::assign(const Tensor& value) {
    if (value.shape() != shape_)
        fail(ErrorKind::ShapeMismatch, "assign " + shape_str(value.shape()) + " to parameter " + name_ +
                                           " of shape " + shape_str(shape_));
    value_ = value.clone();
    if (!materialized_ || grad_.dtype() != value.dtype()) grad_ = Tensor(shape_, value.dtype());
    materialized_ = true;
}

void Parameter::zero_grad() {
    grad_touched_ = false;
    if (!materialized_) return;
    visit_dtype(grad_.dtype(), [&](auto tag) {
        auto g = grad_.mutable_data<decltype(tag)>();
        std::fill(g.begin(), g.end(), decltype(tag){0});
    });
}

// ---- Buffer --------------------------------------------------------------

Buffer::Buffer(std::string name, Shape shape, double initial)
    : name_(std::move(name)), shape_(std::move(shape)), initial_(initial) {}

void Buffer::materialize(DType dtype) {
    if (materialized_ && value_.dtype() == dtype) return;
    value_ = Tensor::full(shape_, initial_, dtype);
    materialized_ = true;
}

void Buffer::convert(DType dtype) {
    if (!materialized_) {
        materialize(dtype);
        return;
    }
    value_ = value_.to(dtype);
}

void Buffer::reset() {
    value_ = Tensor::full(shape_, initial_, materialized_ ? value_.dtype() : DType::f32);
    materialized_ = true;
}

Tensor& Buffer::value() {
    if (!materialized_) fail(ErrorKind::InvalidConfig, "buffer " + name_ + " is not materialized");
    return value_;
}

const Tensor& Buffer::value() const {
    if (!materialized_) fail(ErrorKind::InvalidConfig, "buffer " + name_ + " is not materialized");
    return value_;
}

void Buffer::assign(const Tensor& value) {
    if (value.shape() != shape_)
        fail(ErrorKind::ShapeMismatch, "assign " + shape_str(value.shape()) + " to buffer " + name_);
    value_ = value.clone();
    materialized_ = true;
}

// ---- Var / Tape ----------------------------------------------------------

Tensor Var::value() const {
    if (!tape_) fail(ErrorKind::DetachedLoss, "value of an unbound Var");
    return tape_->node(*this).value;
}

bool Var::requires_grad() const {
    if (!tape_) return false;
    return tape_->node(*this).requires_grad;
}

bool Tape::owns(const Var& v) const noexcept {
    return v.tape_ == this && v.generation_ == generation_ && v.id_ < nodes_.size();
}

const Tape::Node& Tape::node(const Var& v) const {
    if (!owns(v)) fail(ErrorKind::DetachedLoss, "Var does not belong to the live tape");
    return nodes_[v.id_];
}

Tape::Node& Tape::node(const Var& v) {
    if (!owns(v)) fail(ErrorKind::DetachedLoss, "Var does not belong to the live tape");
    return nodes_[v.id_];
}

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), Tensor(), false, false, nullptr, nullptr});
    return Var(this, nodes_.size() - 1, generation_);
}

Var Tape::param(Parameter& p) {
    const bool needs = grad_enabled_ && p.trainable();
    nodes_.push_back(Node{p.value(), Tensor(), false, needs, nullptr, needs ? &p : nullptr});
    return Var(this, nodes_.size() - 1, generation_);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    bool needs = false;
    for (const Var& in : inputs) needs = needs || node(in).requires_grad;
    nodes_.push_back(Node{std::move(value), Tensor(), false, needs, needs ? std::move(backward) : nullptr,
                          nullptr});
    return Var(this, nodes_.size() - 1, generation_);
}

void Tape::accumulate(const Var& v, const Tensor& grad) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (grad.shape() != n.value.shape())
        fail(ErrorKind::ShapeMismatch, "gradient " + shape_str(grad.shape()) + " for value " +
                                           shape_str(n.value.shape()));
    if (!n.has_grad) {
        n.grad = grad;
        n.has_grad = true;
    } else {
        n.grad = add(n.grad, grad);
    }
}

void Tape::backward(const Var& loss) {
    if (!owns(loss)) fail(ErrorKind::DetachedLoss, "loss was not recorded on this tape");
    Node& root = nodes_[loss.id_];
    if (root.value.rank() != 0)
        fail(ErrorKind::ShapeMismatch, "backward needs a rank-0 loss, got " + shape_str(root.value.shape()));
    if (root.requires_grad) {
        root.grad = Tensor::full({}, 1.0, root.value.dtype());
        root.has_grad = true;
    }
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.has_grad) continue;
        if (n.backward) n.backward(*this, n.grad);
        if (n.param) {
            Parameter& p = *n.param;
            Tensor& g = p.grad();
            visit_dtype(g.dtype(), [&](auto tag) {
                using T = decltype(tag);
                kernels<T>().accumulate(n.grad.data<T>().data(), g.mutable_data<T>().data(), g.numel());
            });
            p.mark_grad_touched();
        }
        // Release as we go; intermediate values are no longer needed.
        n.grad = Tensor();
        n.backward = nullptr;
    }
    clear();
}

void Tape::clear() {
    nodes_.clear();
    ++generation_;
}

}  // namespace secnn
