#include "secnn/gradsuite.hpp"

#include <functional>
#include <map>
#include <random>

#include "secnn/models.hpp"
#include "secnn/nn.hpp"
#include "secnn/ops.hpp"
#include "secnn/optim.hpp"

namespace secnn {

std::optional<GradScope> parse_grad_scope(std::string_view name) noexcept {
    if (name == "layers") return GradScope::layers;
    if (name == "blocks") return GradScope::blocks;
    if (name == "model") return GradScope::model;
    return std::nullopt;
}

namespace {

class Suite {
public:
    Suite(double tol, std::uint64_t seed) : tol_(tol), seed_(seed) {}

    Tensor random(Shape shape, double lo = -1.0, double hi = 1.0) {
        std::mt19937_64 rng(seed_ + 7919 * ++draws_);
        std::uniform_real_distribution<double> d(lo, hi);
        std::vector<double> v(numel(shape));
        for (auto& x : v) x = d(rng);
        return Tensor::from_values(std::move(shape), v, DType::f64);
    }

    // Weighted sum so each output coordinate gets its own upstream gradient.
    Var weighted_sum(Tape& tape, const Var& y) {
        const Shape s = y.shape();
        auto it = weights_.find(s);
        if (it == weights_.end()) it = weights_.emplace(s, random(s)).first;
        std::vector<std::size_t> axes(s.size());
        for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
        return ops::sum(ops::mul(y, tape.constant(it->second)), axes);
    }

    // Parameters of a module get f64 values; BN scales stay near 1.
    std::vector<Parameter*> init_module(nn::Module& m) {
        std::vector<Parameter*> ps;
        std::mt19937_64 rng(seed_ + 104729 * ++draws_);
        nn::visit_parameters(m, [&](const std::string& name, Parameter& p) {
            p.set_name(name);
            std::normal_distribution<double> d(0.0, 0.5);
            std::vector<double> v(p.numel());
            for (auto& x : v) x = d(rng);
            if (p.role() == ParamRole::bn_scale)
                for (auto& x : v) x = 1.0 + 0.2 * x;
            p.assign(Tensor::from_values(p.shape(), v, DType::f64));
            ps.push_back(&p);
        });
        nn::visit_buffers(m, [&](const std::string&, Buffer& b) { b.materialize(DType::f64); });
        return ps;
    }

    // Module forward in the given mode with a fixed dropout stream.
    void module(const std::string& unit, nn::Module& m, Shape input, Mode mode = Mode::train,
                const GradCheckOptions& opts = {}) {
        auto params = init_module(m);
        Parameter x("input", input, ParamRole::weight);
        x.assign(random(input));
        params.push_back(&x);
        const std::uint64_t s = seed_;
        run(unit,
            [&](Tape& t) {
                std::mt19937_64 rng(s);
                nn::ForwardContext ctx{t, mode, rng};
                return weighted_sum(t, m.forward(t.param(x), ctx));
            },
            params, opts);
    }

    // Pure op of one input.
    void op(const std::string& unit, const std::function<Var(Tape&, const Var&)>& f, Tensor point) {
        Parameter x("input", point.shape(), ParamRole::weight);
        x.assign(point);
        run(unit, [&](Tape& t) { return weighted_sum(t, f(t, t.param(x))); }, {&x}, {});
    }

    void run(const std::string& unit, const LossFn& fn, const std::vector<Parameter*>& params,
             GradCheckOptions opts) {
        opts.seed = seed_;
        results_.push_back({unit, grad_check_parameters(fn, params, tol_, opts)});
    }

    std::vector<GradUnitResult>& results() { return results_; }
    std::uint64_t seed() const { return seed_; }

private:
    double tol_;
    std::uint64_t seed_;
    std::uint64_t draws_ = 0;
    std::map<Shape, Tensor> weights_;
    std::vector<GradUnitResult> results_;
};

void layers(Suite& s) {
    {
        nn::Linear l(5, 4, true);
        s.module("linear", l, {3, 5});
    }
    {
        nn::Conv2d c(3, 4, 3, 1, 1, true);
        s.module("conv2d 3x3 s1", c, {2, 3, 6, 5});
    }
    {
        nn::Conv2d c(3, 4, 3, 2, 1, false);
        s.module("conv2d 3x3 s2", c, {2, 3, 7, 6});
    }
    {
        nn::Conv2d c(3, 2, 1, 2, 0, false);
        s.module("conv2d 1x1 s2", c, {1, 3, 5, 4});
    }
    {
        nn::BatchNorm2d bn(3);
        s.module("batchnorm2d train", bn, {2, 3, 3, 4}, Mode::train);
    }
    {
        nn::BatchNorm2d bn(3);
        s.module("batchnorm2d eval", bn, {2, 3, 3, 4}, Mode::eval);
    }
    // Shift keeps inputs away from the ReLU kink.
    s.op("relu", [](Tape&, const Var& x) { return ops::relu(x); }, s.random({2, 3, 4}, 0.05, 1.0));
    s.op("relu (negative side)", [](Tape&, const Var& x) { return ops::relu(x); }, s.random({2, 3, 4}, -1.0, -0.05));
    s.op("sigmoid", [](Tape&, const Var& x) { return ops::sigmoid(x); }, s.random({2, 5}));
    {
        nn::MaxPool2d mp(3, 2, 1);
        s.module("maxpool2d", mp, {2, 3, 7, 6});
    }
    {
        nn::AdaptiveAvgPool2d ap(3, 4);
        s.module("adaptive avgpool2d", ap, {2, 3, 7, 6});
    }
    {
        nn::GlobalAvgPool gap;
        s.module("global avgpool", gap, {2, 3, 5, 4});
    }
    {
        nn::Dropout d(0.3);
        s.module("dropout", d, {4, 6});
    }
    {
        nn::Dropout2d d(0.3);
        s.module("dropout2d", d, {2, 6, 3, 3});
    }
    {
        nn::SEBlock se(16, 16);
        s.module("se gate", se, {2, 16, 4, 3});
    }
    {
        const std::vector<int> labels{0, 2, 1, 2};
        s.op("softmax cross-entropy", [&](Tape&, const Var& x) { return ops::cross_entropy(x, labels); },
             s.random({4, 3}, -3.0, 3.0));
    }
}

void blocks(Suite& s) {
    {
        nn::ResidualSEBlock b(8, 8, 1, 0.0);
        s.module("residual-se identity skip", b, {1, 8, 6, 6});
    }
    {
        nn::ResidualSEBlock b(8, 16, 2, 0.0);
        s.module("residual-se projection skip s2", b, {1, 8, 6, 6});
    }
    {
        nn::ResidualSEBlock b(8, 16, 1, 0.0);
        s.module("residual-se projection skip s1", b, {1, 8, 5, 5});
    }
    {
        nn::ResidualSEBlock b(8, 8, 1, 0.2);
        s.module("residual-se with block dropout", b, {2, 8, 4, 4});
    }
    {
        nn::Bottleneck b(8, 4, 2, true);
        s.module("resnet bottleneck", b, {2, 8, 5, 5});
    }
}

void whole_model(Suite& s) {
    CustomCnnConfig cfg;
    cfg.base_channels = 8;
    cfg.num_classes = 2;
    ModelGraph model = build_custom_cnn(cfg);
    model.materialize(DType::f64);
    kaiming_init(model, s.seed());
    // BN scales near 1 but not exactly; shifts nonzero so every path is live.
    std::mt19937_64 rng(s.seed() + 1);
    std::normal_distribution<double> d(0.0, 0.1);
    for (Parameter* p : model.parameters()) {
        if (p->role() == ParamRole::weight) continue;
        std::vector<double> v(p->numel());
        for (auto& x : v) x = (p->role() == ParamRole::bn_scale ? 1.0 : 0.0) + d(rng);
        p->assign(Tensor::from_values(p->shape(), v, DType::f64));
    }
    std::vector<Parameter*> params = model.parameters();
    Parameter x("input", {1, 3, 16, 16}, ParamRole::weight);
    x.assign(s.random({1, 3, 16, 16}));
    params.push_back(&x);
    const std::vector<int> label{1};
    const std::uint64_t seed = s.seed();
    GradCheckOptions opts;
    opts.max_coords_per_tensor = 12;
    // Batch norm over a single sample at 2x2 (stage 4) is sharply curved;
    // the O(h^2) truncation term needs the smaller step.
    opts.step_scale = 1e-6;
    s.run("custom_cnn C=8 1x3x16x16",
          [&](Tape& t) {
              std::mt19937_64 drop(seed);
              nn::ForwardContext ctx{t, Mode::train, drop};
              return ops::cross_entropy(model.root().forward(t.param(x), ctx), label);
          },
          params, opts);
}

}  // namespace

std::vector<GradUnitResult> run_grad_suite(GradScope scope, double tolerance, std::uint64_t seed) {
    Suite s(tolerance, seed);
    switch (scope) {
        case GradScope::layers: layers(s); break;
        case GradScope::blocks: blocks(s); break;
        case GradScope::model: whole_model(s); break;
    }
    return std::move(s.results());
}

}  // namespace secnn
