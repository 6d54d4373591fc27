#include "secnn/nn.hpp"

#include <algorithm>
#include <sstream>

namespace secnn::nn {
namespace {

std::string join(const std::string& prefix, std::string_view name) {
    return prefix.empty() ? std::string(name) : prefix + "." + std::string(name);
}

std::string fmt_rate(double p) {
    std::ostringstream os;
    os << p;
    return os.str();
}

std::pair<std::size_t, std::size_t> own_counts(Module& m) {
    std::size_t total = 0, trainable = 0;
    m.visit_own_parameters([&](std::string_view, Parameter& p) {
        total += p.numel();
        if (p.trainable()) trainable += p.numel();
    });
    return {total, trainable};
}

void require_rank4(const Shape& s, const char* what) {
    if (s.size() != 4) fail(ErrorKind::ShapeMismatch, std::string(what) + " expects [N,C,H,W], got " + shape_str(s));
}

}  // namespace

Shape Module::trace(const Shape& input, const std::string& prefix, std::vector<SummaryRow>& rows) {
    Shape out = output_shape(input);
    auto [total, trainable] = own_counts(*this);
    rows.push_back(SummaryRow{prefix, describe(), out, total, trainable});
    return out;
}

void visit_parameters(Module& root, const std::function<void(const std::string&, Parameter&)>& f,
                      const std::string& prefix) {
    root.visit_own_parameters([&](std::string_view name, Parameter& p) { f(join(prefix, name), p); });
    root.visit_children([&](std::string_view name, Module& child) { visit_parameters(child, f, join(prefix, name)); });
}

void visit_buffers(Module& root, const std::function<void(const std::string&, Buffer&)>& f,
                   const std::string& prefix) {
    root.visit_own_buffers([&](std::string_view name, Buffer& b) { f(join(prefix, name), b); });
    root.visit_children([&](std::string_view name, Module& child) { visit_buffers(child, f, join(prefix, name)); });
}

// ---- Conv2d ----------------------------------------------------------------

Conv2d::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t padding,
               bool bias)
    : in_(in), out_(out), kernel_(kernel), stride_(stride), padding_(padding),
      weight_("weight", {out, in, kernel, kernel}, ParamRole::weight) {
    if (in == 0 || out == 0 || kernel == 0 || stride == 0)
        fail(ErrorKind::InvalidConfig, "Conv2d extents must be positive");
    if (bias) bias_.emplace("bias", Shape{out}, ParamRole::bias);
}

Var Conv2d::forward(const Var& x, ForwardContext& ctx) {
    require_rank4(x.shape(), "Conv2d");
    if (x.shape()[1] != in_)
        fail(ErrorKind::ShapeMismatch, describe() + " got input " + shape_str(x.shape()));
    std::optional<Var> b;
    if (bias_) b = ctx.tape.param(*bias_);
    return ops::conv2d(x, ctx.tape.param(weight_), b, stride_, padding_);
}

Shape Conv2d::output_shape(const Shape& input) const {
    require_rank4(input, "Conv2d");
    if (input[1] != in_) fail(ErrorKind::ShapeMismatch, describe() + " got input " + shape_str(input));
    return {input[0], out_, conv_out_extent(input[2], kernel_, stride_, padding_),
            conv_out_extent(input[3], kernel_, stride_, padding_)};
}

std::string Conv2d::describe() const {
    std::ostringstream os;
    os << "Conv2d(" << in_ << ", " << out_ << ", kernel=" << kernel_ << ", stride=" << stride_
       << ", padding=" << padding_ << ", bias=" << (bias_ ? "true" : "false") << ")";
    return os.str();
}

void Conv2d::visit_own_parameters(const ParamVisitor& f) {
    f("weight", weight_);
    if (bias_) f("bias", *bias_);
}

// ---- BatchNorm2d -------------------------------------------------------------

BatchNorm2d::BatchNorm2d(std::size_t channels, double eps, double momentum)
    : channels_(channels), config_{eps, momentum}, scale_("weight", {channels}, ParamRole::bn_scale),
      shift_("bias", {channels}, ParamRole::bn_shift), running_mean_("running_mean", {channels}, 0.0),
      running_var_("running_var", {channels}, 1.0) {
    if (channels == 0) fail(ErrorKind::InvalidConfig, "BatchNorm2d needs at least one channel");
}

Var BatchNorm2d::forward(const Var& x, ForwardContext& ctx) {
    return ops::batch_norm2d(x, ctx.tape.param(scale_), ctx.tape.param(shift_), running_mean_.value(),
                             running_var_.value(), ctx.mode, config_);
}

Shape BatchNorm2d::output_shape(const Shape& input) const {
    require_rank4(input, "BatchNorm2d");
    if (input[1] != channels_) fail(ErrorKind::ShapeMismatch, describe() + " got input " + shape_str(input));
    return input;
}

std::string BatchNorm2d::describe() const {
    std::ostringstream os;
    os << "BatchNorm2d(" << channels_ << ", eps=" << config_.eps << ", momentum=" << config_.momentum << ")";
    return os.str();
}

void BatchNorm2d::visit_own_parameters(const ParamVisitor& f) {
    f("weight", scale_);
    f("bias", shift_);
}

void BatchNorm2d::visit_own_buffers(const BufferVisitor& f) {
    f("running_mean", running_mean_);
    f("running_var", running_var_);
}

// ---- Linear ----------------------------------------------------------------

Linear::Linear(std::size_t in, std::size_t out, bool bias)
    : in_(in), out_(out), weight_("weight", {out, in}, ParamRole::weight) {
    if (in == 0 || out == 0) fail(ErrorKind::InvalidConfig, "Linear extents must be positive");
    if (bias) bias_.emplace("bias", Shape{out}, ParamRole::bias);
}

Var Linear::forward(const Var& x, ForwardContext& ctx) {
    if (x.shape().size() != 2 || x.shape()[1] != in_)
        fail(ErrorKind::ShapeMismatch, describe() + " got input " + shape_str(x.shape()));
    std::optional<Var> b;
    if (bias_) b = ctx.tape.param(*bias_);
    return ops::linear(x, ctx.tape.param(weight_), b);
}

Shape Linear::output_shape(const Shape& input) const {
    if (input.size() != 2 || input[1] != in_)
        fail(ErrorKind::ShapeMismatch, describe() + " got input " + shape_str(input));
    return {input[0], out_};
}

std::string Linear::describe() const {
    std::ostringstream os;
    os << "Linear(" << in_ << ", " << out_ << ", bias=" << (bias_ ? "true" : "false") << ")";
    return os.str();
}

void Linear::visit_own_parameters(const ParamVisitor& f) {
    f("weight", weight_);
    if (bias_) f("bias", *bias_);
}

// ---- activations, dropout, pooling -----------------------------------------

Var ReLU::forward(const Var& x, ForwardContext&) { return ops::relu(x); }

Dropout::Dropout(double p) : p_(0.0) { set_rate(p); }

void Dropout::set_rate(double p) {
    if (!(p >= 0.0 && p < 1.0)) fail(ErrorKind::InvalidConfig, "dropout rate must lie in [0,1), got " + fmt_rate(p));
    p_ = p;
}

Var Dropout::forward(const Var& x, ForwardContext& ctx) { return ops::dropout(x, p_, ctx.mode, ctx.rng); }

std::string Dropout::describe() const { return "Dropout(p=" + fmt_rate(p_) + ")"; }

Dropout2d::Dropout2d(double p) : p_(0.0) { set_rate(p); }

void Dropout2d::set_rate(double p) {
    if (!(p >= 0.0 && p < 1.0)) fail(ErrorKind::InvalidConfig, "dropout rate must lie in [0,1), got " + fmt_rate(p));
    p_ = p;
}

Var Dropout2d::forward(const Var& x, ForwardContext& ctx) { return ops::dropout2d(x, p_, ctx.mode, ctx.rng); }

std::string Dropout2d::describe() const { return "Dropout2d(p=" + fmt_rate(p_) + ")"; }

Var GlobalAvgPool::forward(const Var& x, ForwardContext&) { return ops::global_avg_pool(x); }

Shape GlobalAvgPool::output_shape(const Shape& input) const {
    require_rank4(input, "GlobalAvgPool");
    return {input[0], input[1]};
}

MaxPool2d::MaxPool2d(std::size_t kernel, std::size_t stride, std::size_t padding)
    : kernel_(kernel), stride_(stride), padding_(padding) {}

Var MaxPool2d::forward(const Var& x, ForwardContext&) { return ops::max_pool2d(x, kernel_, stride_, padding_); }

Shape MaxPool2d::output_shape(const Shape& input) const {
    require_rank4(input, "MaxPool2d");
    return {input[0], input[1], conv_out_extent(input[2], kernel_, stride_, padding_),
            conv_out_extent(input[3], kernel_, stride_, padding_)};
}

std::string MaxPool2d::describe() const {
    std::ostringstream os;
    os << "MaxPool2d(kernel=" << kernel_ << ", stride=" << stride_ << ", padding=" << padding_ << ")";
    return os.str();
}

AdaptiveAvgPool2d::AdaptiveAvgPool2d(std::size_t out_h, std::size_t out_w) : out_h_(out_h), out_w_(out_w) {}

Var AdaptiveAvgPool2d::forward(const Var& x, ForwardContext&) { return ops::adaptive_avg_pool2d(x, out_h_, out_w_); }

Shape AdaptiveAvgPool2d::output_shape(const Shape& input) const {
    require_rank4(input, "AdaptiveAvgPool2d");
    return {input[0], input[1], out_h_, out_w_};
}

std::string AdaptiveAvgPool2d::describe() const {
    return "AdaptiveAvgPool2d(" + std::to_string(out_h_) + ", " + std::to_string(out_w_) + ")";
}

Var Flatten::forward(const Var& x, ForwardContext&) { return ops::reshape(x, output_shape(x.shape())); }

Shape Flatten::output_shape(const Shape& input) const {
    if (input.empty()) fail(ErrorKind::ShapeMismatch, "Flatten of a scalar");
    return {input[0], numel(input) / input[0]};
}

// ---- Sequential ------------------------------------------------------------

Sequential& Sequential::add(std::string name, std::unique_ptr<Module> child) {
    children_.emplace_back(std::move(name), std::move(child));
    return *this;
}

void Sequential::insert_before(std::string_view before, std::string name, std::unique_ptr<Module> child) {
    for (auto it = children_.begin(); it != children_.end(); ++it) {
        if (it->first == before) {
            children_.emplace(it, std::move(name), std::move(child));
            return;
        }
    }
    fail(ErrorKind::InvalidConfig, "no child named " + std::string(before));
}

Var Sequential::forward(const Var& x, ForwardContext& ctx) {
    Var h = x;
    for (auto& [name, child] : children_) h = child->forward(h, ctx);
    return h;
}

Shape Sequential::output_shape(const Shape& input) const {
    Shape s = input;
    for (const auto& [name, child] : children_) s = child->output_shape(s);
    return s;
}

void Sequential::visit_children(const ChildVisitor& f) {
    for (auto& [name, child] : children_) f(name, *child);
}

Shape Sequential::trace(const Shape& input, const std::string& prefix, std::vector<SummaryRow>& rows) {
    Shape s = input;
    for (auto& [name, child] : children_) s = child->trace(s, join(prefix, name), rows);
    return s;
}

Module* Sequential::find(std::string_view name) {
    for (auto& [n, child] : children_)
        if (n == name) return child.get();
    return nullptr;
}

// ---- SEBlock ---------------------------------------------------------------

SEBlock::SEBlock(std::size_t channels, std::size_t reduction)
    : channels_(channels), hidden_(std::max<std::size_t>(1, channels / (reduction ? reduction : 1))),
      fc1_(channels, hidden_, true), fc2_(hidden_, channels, true) {
    if (reduction == 0) fail(ErrorKind::InvalidConfig, "SE reduction ratio must be positive");
}

Var SEBlock::gate(const Var& x, ForwardContext& ctx) {
    require_rank4(x.shape(), "SEBlock");
    Var squeezed = ops::global_avg_pool(x);
    Var hidden = ops::relu(fc1_.forward(squeezed, ctx));
    return ops::sigmoid(fc2_.forward(hidden, ctx));
}

Var SEBlock::forward(const Var& x, ForwardContext& ctx) {
    const Shape& s = x.shape();
    Var g = gate(x, ctx);
    return ops::mul(x, ops::reshape(g, {s[0], s[1], 1, 1}));
}

std::string SEBlock::describe() const {
    return "SEBlock(" + std::to_string(channels_) + ", hidden=" + std::to_string(hidden_) + ")";
}

void SEBlock::visit_children(const ChildVisitor& f) {
    f("fc1", fc1_);
    f("fc2", fc2_);
}

Shape SEBlock::trace(const Shape& input, const std::string& prefix, std::vector<SummaryRow>& rows) {
    require_rank4(input, "SEBlock");
    Shape pooled{input[0], input[1]};
    fc2_.trace(fc1_.trace(pooled, join(prefix, "fc1"), rows), join(prefix, "fc2"), rows);
    return input;
}

// ---- ResidualSEBlock -------------------------------------------------------

ResidualSEBlock::ResidualSEBlock(std::size_t in, std::size_t out, std::size_t stride, double block_dropout,
                                 std::size_t reduction)
    : in_(in), out_(out), stride_(stride), conv1_(in, out, 3, stride, 1, false), bn1_(out), drop_(block_dropout),
      conv2_(out, out, 3, 1, 1, false), bn2_(out), se_(out, reduction) {
    if (stride != 1 && stride != 2) fail(ErrorKind::InvalidConfig, "ResidualSEBlock stride must be 1 or 2");
    if (stride != 1 || in != out) {
        shortcut_ = std::make_unique<Sequential>();
        shortcut_->emplace<Conv2d>("conv", in, out, 1, stride, 0, false);
        shortcut_->emplace<BatchNorm2d>("bn", out);
    }
}

Var ResidualSEBlock::forward(const Var& x, ForwardContext& ctx) {
    Var h = conv1_.forward(x, ctx);
    h = relu1_.forward(bn1_.forward(h, ctx), ctx);
    h = drop_.forward(h, ctx);
    h = bn2_.forward(conv2_.forward(h, ctx), ctx);
    h = se_.forward(h, ctx);
    Var skip = shortcut_ ? shortcut_->forward(x, ctx) : x;
    return ops::relu(ops::add(h, skip));
}

Shape ResidualSEBlock::output_shape(const Shape& input) const { return conv1_.output_shape(input); }

std::string ResidualSEBlock::describe() const {
    std::ostringstream os;
    os << "ResidualSEBlock(" << in_ << ", " << out_ << ", stride=" << stride_ << ")";
    return os.str();
}

void ResidualSEBlock::visit_children(const ChildVisitor& f) {
    f("conv1", conv1_);
    f("bn1", bn1_);
    f("relu1", relu1_);
    f("drop", drop_);
    f("conv2", conv2_);
    f("bn2", bn2_);
    f("se", se_);
    if (shortcut_) f("shortcut", *shortcut_);
}

Shape ResidualSEBlock::trace(const Shape& input, const std::string& prefix, std::vector<SummaryRow>& rows) {
    Shape s = conv1_.trace(input, join(prefix, "conv1"), rows);
    s = bn1_.trace(s, join(prefix, "bn1"), rows);
    s = relu1_.trace(s, join(prefix, "relu1"), rows);
    s = drop_.trace(s, join(prefix, "drop"), rows);
    s = conv2_.trace(s, join(prefix, "conv2"), rows);
    s = bn2_.trace(s, join(prefix, "bn2"), rows);
    s = se_.trace(s, join(prefix, "se"), rows);
    if (shortcut_) shortcut_->trace(input, join(prefix, "shortcut"), rows);
    return s;
}

// ---- Bottleneck ------------------------------------------------------------

Bottleneck::Bottleneck(std::size_t in, std::size_t planes, std::size_t stride, bool project)
    : in_(in), planes_(planes), stride_(stride), conv1_(in, planes, 1, 1, 0, false), bn1_(planes),
      conv2_(planes, planes, 3, stride, 1, false), bn2_(planes), conv3_(planes, planes * expansion, 1, 1, 0, false),
      bn3_(planes * expansion) {
    if (project) {
        downsample_ = std::make_unique<Sequential>();
        downsample_->emplace<Conv2d>("0", in, planes * expansion, 1, stride, 0, false);
        downsample_->emplace<BatchNorm2d>("1", planes * expansion);
    }
}

Var Bottleneck::forward(const Var& x, ForwardContext& ctx) {
    Var h = ops::relu(bn1_.forward(conv1_.forward(x, ctx), ctx));
    h = ops::relu(bn2_.forward(conv2_.forward(h, ctx), ctx));
    h = bn3_.forward(conv3_.forward(h, ctx), ctx);
    Var skip = downsample_ ? downsample_->forward(x, ctx) : x;
    return ops::relu(ops::add(h, skip));
}

Shape Bottleneck::output_shape(const Shape& input) const {
    return conv3_.output_shape(conv2_.output_shape(conv1_.output_shape(input)));
}

std::string Bottleneck::describe() const {
    std::ostringstream os;
    os << "Bottleneck(" << in_ << ", " << planes_ << ", stride=" << stride_ << ")";
    return os.str();
}

void Bottleneck::visit_children(const ChildVisitor& f) {
    f("conv1", conv1_);
    f("bn1", bn1_);
    f("conv2", conv2_);
    f("bn2", bn2_);
    f("conv3", conv3_);
    f("bn3", bn3_);
    if (downsample_) f("downsample", *downsample_);
}

Shape Bottleneck::trace(const Shape& input, const std::string& prefix, std::vector<SummaryRow>& rows) {
    Shape s = conv1_.trace(input, join(prefix, "conv1"), rows);
    s = bn1_.trace(s, join(prefix, "bn1"), rows);
    s = conv2_.trace(s, join(prefix, "conv2"), rows);
    s = bn2_.trace(s, join(prefix, "bn2"), rows);
    s = conv3_.trace(s, join(prefix, "conv3"), rows);
    s = bn3_.trace(s, join(prefix, "bn3"), rows);
    if (downsample_) downsample_->trace(input, join(prefix, "downsample"), rows);
    return s;
}

}  // namespace secnn::nn
