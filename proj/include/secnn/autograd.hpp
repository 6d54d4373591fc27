#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "secnn/tensor.hpp"

namespace secnn {

// What a parameter is for; decides initialization and weight-decay
// eligibility.
enum class ParamRole { weight, bias, bn_scale, bn_shift };

// A trainable tensor with its gradient slot. Parameters start out
// structural (shape only) so that large graphs can be counted without
// allocating; materialize() allocates value and grad.
class Parameter {
public:
    Parameter(std::string name, Shape shape, ParamRole role);

    const std::string& name() const noexcept { return name_; }
    void set_name(std::string name) { name_ = std::move(name); }
    const Shape& shape() const noexcept { return shape_; }
    std::size_t numel() const noexcept { return secnn::numel(shape_); }
    ParamRole role() const noexcept { return role_; }

    // Only convolution and linear weights are decayed.
    bool decay_eligible() const noexcept { return role_ == ParamRole::weight; }
    bool trainable() const noexcept { return trainable_; }
    void set_trainable(bool trainable) noexcept { trainable_ = trainable; }

    bool materialized() const noexcept { return materialized_; }
    // Allocates zero-filled value and grad; no-op with matching dtype.
    void materialize(DType dtype = DType::f32);
    // Converts value and grad in place to dtype.
    void convert(DType dtype);

    // Throw InvalidConfig when not materialized.
    Tensor& value();
    const Tensor& value() const;
    Tensor& grad();
    const Tensor& grad() const;

    // Replaces the value; shape must match.
    void assign(const Tensor& value);

    void zero_grad();
    bool grad_touched() const noexcept { return grad_touched_; }
    void mark_grad_touched() noexcept { grad_touched_ = true; }

private:
    std::string name_;
    Shape shape_;
    ParamRole role_;
    bool trainable_ = true;
    bool materialized_ = false;
    bool grad_touched_ = false;
    Tensor value_;
    Tensor grad_;
};

// Non-trainable state carried with a model (batch-norm running statistics).
class Buffer {
public:
    Buffer(std::string name, Shape shape, double initial);

    const std::string& name() const noexcept { return name_; }
    void set_name(std::string name) { name_ = std::move(name); }
    const Shape& shape() const noexcept { return shape_; }
    double initial() const noexcept { return initial_; }
    bool materialized() const noexcept { return materialized_; }
    void materialize(DType dtype = DType::f32);
    void convert(DType dtype);
    // Resets to the initial fill.
    void reset();
    Tensor& value();
    const Tensor& value() const;
    void assign(const Tensor& value);

private:
    std::string name_;
    Shape shape_;
    double initial_;
    bool materialized_ = false;
    Tensor value_;
};

class Tape;

// Handle to a value recorded on a tape.
class Var {
public:
    Var() = default;

    // By value: the tape's node storage may move as more nodes are recorded.
    Tensor value() const;
    Shape shape() const { return value().shape(); }
    DType dtype() const { return value().dtype(); }
    bool requires_grad() const;
    Tape* tape() const noexcept { return tape_; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id, std::uint64_t generation)
        : tape_(tape), id_(id), generation_(generation) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
    std::uint64_t generation_ = 0;
};

// Define-by-run record of primitive applications in topological order.
// backward() consumes the tape: it is cleared afterwards and every Var
// issued from it becomes detached.
class Tape {
public:
    // Receives the gradient of the node's output and routes gradients to the
    // inputs through accumulate().
    using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    // Leaf bound to a parameter; gradients reach p.grad() on backward when
    // p is trainable.
    Var param(Parameter& p);
    // Records an op. The backward rule is kept only when some input requires
    // a gradient.
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

    // Adds grad into v's gradient slot; ignored when v needs no gradient.
    void accumulate(const Var& v, const Tensor& grad);

    // Seeds d(loss)/d(loss) = 1 and propagates. loss must be rank-0 and
    // recorded on this tape.
    void backward(const Var& loss);

    void clear();
    std::size_t size() const noexcept { return nodes_.size(); }

    // With gradients disabled, parameter leaves are recorded as constants and
    // no backward closures are kept (inference).
    void set_grad_enabled(bool enabled) noexcept { grad_enabled_ = enabled; }
    bool grad_enabled() const noexcept { return grad_enabled_; }
    bool owns(const Var& v) const noexcept;

private:
    friend class Var;
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        BackwardFn backward;
        Parameter* param = nullptr;
    };

    const Node& node(const Var& v) const;
    Node& node(const Var& v);

    std::vector<Node> nodes_;
    std::uint64_t generation_ = 1;
    bool grad_enabled_ = true;
};

// Dropout/BN behaviour switch.
enum class Mode { train, eval };

}  // namespace secnn
