#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "secnn/autograd.hpp"
#include "secnn/ops.hpp"

namespace secnn::nn {

struct ForwardContext {
    Tape& tape;
    Mode mode;
    std::mt19937_64& rng;
};

// One row of an architecture summary.
struct SummaryRow {
    std::string name;
    std::string layer;
    Shape output_shape;
    std::size_t params = 0;
    std::size_t trainable = 0;
};

class Module {
public:
    virtual ~Module() = default;

    virtual Var forward(const Var& x, ForwardContext& ctx) = 0;
    virtual Shape output_shape(const Shape& input) const = 0;
    // e.g. "Conv2d(3, 32, kernel=3, stride=1, padding=1, bias=false)"
    virtual std::string describe() const = 0;

    using ChildVisitor = std::function<void(std::string_view name, Module& child)>;
    using ParamVisitor = std::function<void(std::string_view name, Parameter& p)>;
    using BufferVisitor = std::function<void(std::string_view name, Buffer& b)>;

    // Direct children, in forward order.
    virtual void visit_children(const ChildVisitor&) {}
    // Parameters and buffers owned directly by this module.
    virtual void visit_own_parameters(const ParamVisitor&) {}
    virtual void visit_own_buffers(const BufferVisitor&) {}

    // Appends one row per leaf module reached by a forward pass from
    // `input`, returning this module's output shape.
    virtual Shape trace(const Shape& input, const std::string& prefix, std::vector<SummaryRow>& rows);
};

// Walks the tree depth-first, naming parameters and buffers hierarchically
// ("stage2.conv1.weight").
void visit_parameters(Module& root, const std::function<void(const std::string&, Parameter&)>& f,
                      const std::string& prefix = "");
void visit_buffers(Module& root, const std::function<void(const std::string&, Buffer&)>& f,
                   const std::string& prefix = "");

// ---- leaf layers -----------------------------------------------------------

class Conv2d : public Module {
public:
    Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t padding,
           bool bias);
    Var forward(const Var& x, ForwardContext& ctx) override;
    Shape output_shape(const Shape& input) const override;
    std::string describe() const override;
    void visit_own_parameters(const ParamVisitor& f) override;

    Parameter& weight() { return weight_; }
    Parameter* bias() { return bias_ ? &*bias_ : nullptr; }

private:
    std::size_t in_, out_, kernel_, stride_, padding_;
    Parameter weight_;
    std::optional<Parameter> bias_;
};

class BatchNorm2d : public Module {
public:
    explicit BatchNorm2d(std::size_t channels, double eps = 1e-5, double momentum = 0.1);
    Var forward(const Var& x, ForwardContext& ctx) override;
    Shape output_shape(const Shape& input) const override;
    std::string describe() const override;
    void visit_own_parameters(const ParamVisitor& f) override;
    void visit_own_buffers(const BufferVisitor& f) override;

    Parameter& scale() { return scale_; }
    Parameter& shift() { return shift_; }
    Buffer& running_mean() { return running_mean_; }
    Buffer& running_var() { return running_var_; }

private:
    std::size_t channels_;
    ops::BatchNormConfig config_;
    Parameter scale_, shift_;
    Buffer running_mean_, running_var_;
};

class Linear : public Module {
public:
    Linear(std::size_t in, std::size_t out, bool bias = true);
    Var forward(const Var& x, ForwardContext& ctx) override;
    Shape output_shape(const Shape& input) const override;
    std::string describe() const override;
    void visit_own_parameters(const ParamVisitor& f) override;

    Parameter& weight() { return weight_; }
    Parameter* bias() { return bias_ ? &*bias_ : nullptr; }

private:
    std::size_t in_, out_;
    Parameter weight_;
    std::optional<Parameter> bias_;
};

class ReLU : public Module {
public:
    Var forward(const Var& x, ForwardContext& ctx) override;
    Shape output_shape(const Shape& input) const override { return input; }
    std::string describe() const override { return "ReLU"; }
};

class Dropout : public Module {
public:
    explicit Dropout(double p);
    Var forward(const Var& x, ForwardContext& ctx) override;
    Shape output_shape(const Shape& input) const override { return input; }
    std::string describe() const override;
    double rate() const noexcept { return p_; }
    void set_rate(double p);

private:
    double p_;
};

class Dropout2d : public Module {
public:
    explicit Dropout2d(double p);
    Var forward(const Var& x, ForwardContext& ctx) override;
    Shape output_shape(const Shape& input) const override { return input; }
    std::string describe() const override;
    double rate() const noexcept { return p_; }
    void set_rate(double p);

private:
    double p_;
};

// [N,C,H,W] -> [N,C]
class GlobalAvgPool : public Module {
public:
    Var forward(const Var& x, ForwardContext& ctx) override;
    Shape output_shape(const Shape& input) const override;
    std::string describe() const override { return "GlobalAvgPool"; }
};

class MaxPool2d : public Module {
public:
    MaxPool2d(std::size_t kernel, std::size_t stride, std::size_t padding);
    Var forward(const Var& x, ForwardContext& ctx) override;
    Shape output_shape(const Shape& input) const override;
    std::string describe() const override;

private:
    std::size_t kernel_, stride_, padding_;
};

class AdaptiveAvgPool2d : public Module {
public:
    AdaptiveAvgPool2d(std::size_t out_h, std::size_t out_w);
    Var forward(const Var& x, ForwardContext& ctx) override;
    Shape output_shape(const Shape& input) const override;
    std::string describe() const override;

private:
    std::size_t out_h_, out_w_;
};

// [N,...] -> [N, prod(...)]
class Flatten : public Module {
public:
    Var forward(const Var& x, ForwardContext& ctx) override;
    Shape output_shape(const Shape& input) const override;
    std::string describe() const override { return "Flatten"; }
};

// ---- composites ------------------------------------------------------------

class Sequential : public Module {
public:
    Sequential() = default;

    Sequential& add(std::string name, std::unique_ptr<Module> child);
    template <class M, class... Args>
    M& emplace(std::string name, Args&&... args) {
        auto child = std::make_unique<M>(std::forward<Args>(args)...);
        M& ref = *child;
        add(std::move(name), std::move(child));
        return ref;
    }
    // Inserts before the child called `before`.
    void insert_before(std::string_view before, std::string name, std::unique_ptr<Module> child);

    Var forward(const Var& x, ForwardContext& ctx) override;
    Shape output_shape(const Shape& input) const override;
    std::string describe() const override { return "Sequential"; }
    void visit_children(const ChildVisitor& f) override;
    Shape trace(const Shape& input, const std::string& prefix, std::vector<SummaryRow>& rows) override;

    std::size_t size() const noexcept { return children_.size(); }
    Module* find(std::string_view name);

private:
    std::vector<std::pair<std::string, std::unique_ptr<Module>>> children_;
};

// Channel attention: s = sigmoid(fc2(relu(fc1(gap(x))))), out = x * s with s
// broadcast over the spatial axes. The bottleneck width is max(1, ch/r).
class SEBlock : public Module {
public:
    SEBlock(std::size_t channels, std::size_t reduction = 16);
    Var forward(const Var& x, ForwardContext& ctx) override;
    Shape output_shape(const Shape& input) const override { return input; }
    std::string describe() const override;
    void visit_children(const ChildVisitor& f) override;
    Shape trace(const Shape& input, const std::string& prefix, std::vector<SummaryRow>& rows) override;

    // The [N, ch] gate values for x.
    Var gate(const Var& x, ForwardContext& ctx);
    std::size_t hidden() const noexcept { return hidden_; }
    Linear& fc1() { return fc1_; }
    Linear& fc2() { return fc2_; }

private:
    std::size_t channels_, hidden_;
    Linear fc1_, fc2_;
};

// y = relu(SE(bn2(conv2(drop2d(relu(bn1(conv1(x)))))) + skip(x)). skip is the
// identity when stride == 1 and in == out, otherwise a 1x1 strided
// projection (no bias) followed by batch norm.
class ResidualSEBlock : public Module {
public:
    ResidualSEBlock(std::size_t in, std::size_t out, std::size_t stride, double block_dropout,
                    std::size_t reduction = 16);
    Var forward(const Var& x, ForwardContext& ctx) override;
    Shape output_shape(const Shape& input) const override;
    std::string describe() const override;
    void visit_children(const ChildVisitor& f) override;
    Shape trace(const Shape& input, const std::string& prefix, std::vector<SummaryRow>& rows) override;

    bool has_projection() const noexcept { return static_cast<bool>(shortcut_); }
    Dropout2d& block_dropout() { return drop_; }

private:
    std::size_t in_, out_, stride_;
    Conv2d conv1_;
    BatchNorm2d bn1_;
    ReLU relu1_;
    Dropout2d drop_;
    Conv2d conv2_;
    BatchNorm2d bn2_;
    SEBlock se_;
    std::unique_ptr<Sequential> shortcut_;
};

// ResNet-50 bottleneck: 1x1 -> 3x3 (strided) -> 1x1 (x4), each with batch
// norm, plus an optional projection shortcut.
class Bottleneck : public Module {
public:
    static constexpr std::size_t expansion = 4;

    Bottleneck(std::size_t in, std::size_t planes, std::size_t stride, bool project);
    Var forward(const Var& x, ForwardContext& ctx) override;
    Shape output_shape(const Shape& input) const override;
    std::string describe() const override;
    void visit_children(const ChildVisitor& f) override;
    Shape trace(const Shape& input, const std::string& prefix, std::vector<SummaryRow>& rows) override;

private:
    std::size_t in_, planes_, stride_;
    Conv2d conv1_;
    BatchNorm2d bn1_;
    Conv2d conv2_;
    BatchNorm2d bn2_;
    Conv2d conv3_;
    BatchNorm2d bn3_;
    std::unique_ptr<Sequential> downsample_;
};

}  // namespace secnn::nn
