#include "secnn/models.hpp"

#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

namespace secnn {

std::string_view to_string(Architecture arch) noexcept {
    switch (arch) {
        case Architecture::custom_cnn: return "custom_cnn";
        case Architecture::resnet50: return "resnet50";
        case Architecture::vgg16: return "vgg16";
    }
    return "unknown";
}

std::optional<Architecture> parse_architecture(std::string_view name) noexcept {
    if (name == "custom_cnn" || name == "custom") return Architecture::custom_cnn;
    if (name == "resnet50") return Architecture::resnet50;
    if (name == "vgg16") return Architecture::vgg16;
    return std::nullopt;
}

// ---- ModelGraph --------------------------------------------------------------

ModelGraph::ModelGraph(Architecture arch, std::unique_ptr<nn::Sequential> root, std::size_t num_classes,
                       std::size_t base_channels)
    : arch_(arch), root_(std::move(root)), num_classes_(num_classes), base_channels_(base_channels) {
    refresh();
}

void ModelGraph::refresh() {
    params_.clear();
    buffers_.clear();
    std::set<std::string> seen;
    nn::visit_parameters(*root_, [&](const std::string& name, Parameter& p) {
        if (!seen.insert(name).second) fail(ErrorKind::InvalidConfig, "duplicate parameter name " + name);
        p.set_name(name);
        params_.push_back(&p);
    });
    nn::visit_buffers(*root_, [&](const std::string& name, Buffer& b) {
        b.set_name(name);
        buffers_.push_back(&b);
    });
}

std::size_t ModelGraph::min_spatial() const noexcept {
    switch (arch_) {
        case Architecture::custom_cnn: return 8;
        case Architecture::resnet50: return 32;
        case Architecture::vgg16: return 32;
    }
    return 1;
}

Parameter* ModelGraph::find_parameter(std::string_view name) const {
    for (Parameter* p : params_)
        if (p->name() == name) return p;
    return nullptr;
}

Parameter& ModelGraph::parameter(std::string_view name) const {
    Parameter* p = find_parameter(name);
    if (!p) fail(ErrorKind::InvalidConfig, "no parameter named " + std::string(name));
    return *p;
}

Buffer* ModelGraph::find_buffer(std::string_view name) const {
    for (Buffer* b : buffers_)
        if (b->name() == name) return b;
    return nullptr;
}

bool ModelGraph::materialized() const {
    for (const Parameter* p : params_)
        if (!p->materialized()) return false;
    for (const Buffer* b : buffers_)
        if (!b->materialized()) return false;
    return true;
}

void ModelGraph::materialize(DType dtype) {
    for (Parameter* p : params_) p->materialize(dtype);
    for (Buffer* b : buffers_) b->materialize(dtype);
}

void ModelGraph::convert(DType dtype) {
    for (Parameter* p : params_) p->convert(dtype);
    for (Buffer* b : buffers_) b->convert(dtype);
}

DType ModelGraph::dtype() const {
    for (const Parameter* p : params_)
        if (p->materialized()) return p->value().dtype();
    return DType::f32;
}

void ModelGraph::check_input(const Shape& s) const {
    if (s.size() != 4 || s[1] != 3)
        fail(ErrorKind::ShapeMismatch, "model input must be [N,3,H,W], got " + shape_str(s));
    if (s[2] < min_spatial() || s[3] < min_spatial())
        fail(ErrorKind::SpatialTooSmall, std::string(to_string(arch_)) + " needs H,W >= " +
                                             std::to_string(min_spatial()) + ", got " + shape_str(s));
}

Var ModelGraph::forward(Tape& tape, const Tensor& input, Mode mode, std::mt19937_64& rng) {
    check_input(input.shape());
    if (!materialized()) fail(ErrorKind::InvalidConfig, "model parameters are not initialized");
    const DType dt = dtype();
    Var x = tape.constant(input.dtype() == dt ? input : input.to(dt));
    nn::ForwardContext ctx{tape, mode, rng};
    return root_->forward(x, ctx);
}

Tensor ModelGraph::logits(const Tensor& input) {
    Tape tape;
    tape.set_grad_enabled(false);
    std::mt19937_64 rng(0);  // unused in eval mode
    Tensor out = forward(tape, input, Mode::eval, rng).value();
    tape.clear();
    return out;
}

std::vector<nn::SummaryRow> ModelGraph::summary(const Shape& input) const {
    check_input(input);
    std::vector<nn::SummaryRow> rows;
    root_->trace(input, "", rows);
    return rows;
}

void ModelGraph::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

// ---- builders ----------------------------------------------------------------

ModelGraph build_custom_cnn(const CustomCnnConfig& cfg) {
    const std::size_t c = cfg.base_channels;
    if (c == 0) fail(ErrorKind::InvalidConfig, "base_channels must be positive");
    if (cfg.num_classes < 2) fail(ErrorKind::InvalidConfig, "num_classes must be >= 2");
    if (cfg.se_reduction == 0) fail(ErrorKind::InvalidConfig, "SE reduction must be positive");

    auto root = std::make_unique<nn::Sequential>();
    auto stem = std::make_unique<nn::Sequential>();
    stem->emplace<nn::Conv2d>("conv", 3, c, 3, 1, 1, false);
    stem->emplace<nn::BatchNorm2d>("bn", c);
    stem->emplace<nn::ReLU>("relu");
    root->add("stem", std::move(stem));

    const std::size_t widths[4] = {c, 2 * c, 4 * c, 4 * c};
    const std::size_t strides[4] = {1, 2, 2, 2};
    std::size_t in = c;
    for (int i = 0; i < 4; ++i) {
        root->emplace<nn::ResidualSEBlock>("stage" + std::to_string(i + 1), in, widths[i], strides[i],
                                           cfg.block_dropout, cfg.se_reduction);
        in = widths[i];
    }
    root->emplace<nn::GlobalAvgPool>("pool");

    auto head = std::make_unique<nn::Sequential>();
    head->emplace<nn::Dropout>("drop", cfg.head_dropout);
    head->emplace<nn::Linear>("fc1", 4 * c, 128, true);
    head->emplace<nn::ReLU>("relu");
    head->emplace<nn::Linear>("fc2", 128, cfg.num_classes, true);
    root->add("head", std::move(head));

    return ModelGraph(Architecture::custom_cnn, std::move(root), cfg.num_classes, c);
}

ModelGraph build_resnet50(std::size_t num_classes) {
    if (num_classes < 2) fail(ErrorKind::InvalidConfig, "num_classes must be >= 2");
    auto root = std::make_unique<nn::Sequential>();
    root->emplace<nn::Conv2d>("conv1", 3, 64, 7, 2, 3, false);
    root->emplace<nn::BatchNorm2d>("bn1", 64);
    root->emplace<nn::ReLU>("relu");
    root->emplace<nn::MaxPool2d>("maxpool", 3, 2, 1);

    const std::size_t blocks[4] = {3, 4, 6, 3};
    const std::size_t planes[4] = {64, 128, 256, 512};
    std::size_t in = 64;
    for (int l = 0; l < 4; ++l) {
        auto layer = std::make_unique<nn::Sequential>();
        for (std::size_t b = 0; b < blocks[l]; ++b) {
            const std::size_t stride = (b == 0 && l > 0) ? 2 : 1;
            const bool project = b == 0;  // channel count always changes in the first block
            layer->emplace<nn::Bottleneck>(std::to_string(b), in, planes[l], stride, project);
            in = planes[l] * nn::Bottleneck::expansion;
        }
        root->add("layer" + std::to_string(l + 1), std::move(layer));
    }
    root->emplace<nn::GlobalAvgPool>("avgpool");
    root->emplace<nn::Linear>("fc", in, num_classes, true);
    return ModelGraph(Architecture::resnet50, std::move(root), num_classes, 64);
}

ModelGraph build_vgg16(std::size_t num_classes) {
    if (num_classes < 2) fail(ErrorKind::InvalidConfig, "num_classes must be >= 2");
    // 0 marks a max-pool.
    const std::size_t cfg[] = {64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0};
    auto features = std::make_unique<nn::Sequential>();
    std::size_t in = 3, idx = 0;
    for (std::size_t v : cfg) {
        if (v == 0) {
            features->emplace<nn::MaxPool2d>(std::to_string(idx++), 2, 2, 0);
        } else {
            features->emplace<nn::Conv2d>(std::to_string(idx++), in, v, 3, 1, 1, true);
            features->emplace<nn::ReLU>(std::to_string(idx++));
            in = v;
        }
    }
    auto root = std::make_unique<nn::Sequential>();
    root->add("features", std::move(features));
    root->emplace<nn::AdaptiveAvgPool2d>("avgpool", 7, 7);
    root->emplace<nn::Flatten>("flatten");
    auto classifier = std::make_unique<nn::Sequential>();
    classifier->emplace<nn::Linear>("0", 512 * 7 * 7, 4096, true);
    classifier->emplace<nn::ReLU>("1");
    classifier->emplace<nn::Dropout>("2", 0.5);
    classifier->emplace<nn::Linear>("3", 4096, 4096, true);
    classifier->emplace<nn::ReLU>("4");
    classifier->emplace<nn::Dropout>("5", 0.5);
    classifier->emplace<nn::Linear>("6", 4096, num_classes, true);
    root->add("classifier", std::move(classifier));
    return ModelGraph(Architecture::vgg16, std::move(root), num_classes, 64);
}

void set_head_dropout(ModelGraph& model, double head_dropout) {
    switch (model.architecture()) {
        case Architecture::custom_cnn: {
            auto* head = dynamic_cast<nn::Sequential*>(model.root().find("head"));
            auto* d = head ? dynamic_cast<nn::Dropout*>(head->find("drop")) : nullptr;
            if (!d) fail(ErrorKind::UnsupportedModel, "custom_cnn graph has no head dropout");
            d->set_rate(head_dropout);
            break;
        }
        case Architecture::resnet50:
            if (auto* d = dynamic_cast<nn::Dropout*>(model.root().find("dropout"))) {
                d->set_rate(head_dropout);
            } else {
                model.root().insert_before("fc", "dropout", std::make_unique<nn::Dropout>(head_dropout));
                model.refresh();
            }
            break;
        case Architecture::vgg16: {
            auto* cls = dynamic_cast<nn::Sequential*>(model.root().find("classifier"));
            if (!cls) fail(ErrorKind::UnsupportedModel, "vgg16 graph has no classifier");
            cls->visit_children([&](std::string_view, nn::Module& m) {
                if (auto* d = dynamic_cast<nn::Dropout*>(&m)) d->set_rate(head_dropout);
            });
            break;
        }
    }
}

void freeze_for_transfer(ModelGraph& model, double head_dropout) {
    if (model.architecture() == Architecture::custom_cnn)
        fail(ErrorKind::UnsupportedModel, "transfer-learning freeze applies to resnet50/vgg16 only");
    set_head_dropout(model, head_dropout);
    const std::string head_prefix = model.architecture() == Architecture::resnet50 ? "fc." : "classifier.6.";
    for (Parameter* p : model.parameters()) p->set_trainable(p->name().rfind(head_prefix, 0) == 0);
    model.set_transfer_frozen(true);
}

namespace {

std::size_t fan_in(const Parameter& p) {
    const Shape& s = p.shape();
    std::size_t f = 1;
    for (std::size_t i = 1; i < s.size(); ++i) f *= s[i];
    return f;
}

}  // namespace

void kaiming_init(ModelGraph& model, std::uint64_t seed) {
    const DType dt = model.materialized() ? model.dtype() : DType::f32;
    model.materialize(dt);
    std::mt19937_64 rng(seed);
    for (Parameter* p : model.parameters()) {
        std::vector<double> vals(p->numel());
        switch (p->role()) {
            case ParamRole::weight: {
                std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in(*p))));
                for (double& v : vals) v = dist(rng);
                break;
            }
            case ParamRole::bn_scale: std::fill(vals.begin(), vals.end(), 1.0); break;
            case ParamRole::bias:
            case ParamRole::bn_shift: break;
        }
        p->assign(Tensor::from_values(p->shape(), vals, dt));
        p->zero_grad();
    }
    for (Buffer* b : model.buffers()) b->reset();
}

ParamCount param_count(const ModelGraph& model) {
    ParamCount c;
    for (const Parameter* p : model.parameters()) {
        c.total += p->numel();
        if (p->trainable()) c.trainable += p->numel();
    }
    return c;
}

double size_mb(std::size_t total_params) {
    const double mb = 4.0 * static_cast<double>(total_params) / 1048576.0;
    return std::round(mb * 100.0) / 100.0;
}

double size_mb(const ModelGraph& model) { return size_mb(param_count(model).total); }

std::string format_summary(const ModelGraph& model, const Shape& input) {
    const auto rows = model.summary(input);
    std::size_t name_w = 5, layer_w = 5, shape_w = 12;
    for (const auto& r : rows) {
        name_w = std::max(name_w, r.name.size());
        layer_w = std::max(layer_w, r.layer.size());
        shape_w = std::max(shape_w, shape_str(r.output_shape).size());
    }
    std::ostringstream os;
    os << std::left << std::setw(name_w + 2) << "name" << std::setw(layer_w + 2) << "layer" << std::setw(shape_w + 2)
       << "output shape" << std::right << std::setw(12) << "params"
       << "  trainable\n";
    os << std::string(name_w + layer_w + shape_w + 6 + 12 + 11, '-') << '\n';
    for (const auto& r : rows) {
        const char* flag = r.params == 0 ? "-" : (r.trainable == r.params ? "yes" : (r.trainable ? "partial" : "no"));
        os << std::left << std::setw(name_w + 2) << r.name << std::setw(layer_w + 2) << r.layer
           << std::setw(shape_w + 2) << shape_str(r.output_shape) << std::right << std::setw(12) << r.params << "  "
           << flag << '\n';
    }
    const ParamCount pc = param_count(model);
    os << "total params:     " << pc.total << '\n'
       << "trainable params: " << pc.trainable << '\n'
       << "size (MB):        " << std::fixed << std::setprecision(2) << size_mb(pc.total) << '\n';
    return os.str();
}

}  // namespace secnn
