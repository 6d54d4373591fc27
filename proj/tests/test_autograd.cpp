#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "secnn/gradcheck.hpp"
#include "secnn/gradsuite.hpp"
#include "secnn/nn.hpp"
#include "secnn/ops.hpp"

using namespace secnn;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = d(rng);
    return Tensor::from_values(std::move(shape), v, DType::f64);
}

Parameter make_param(const std::string& name, Tensor value, ParamRole role = ParamRole::weight) {
    Parameter p(name, value.shape(), role);
    p.assign(value);
    return p;
}

// Weighted sum so every output coordinate gets a distinct upstream gradient.
Var weighted_sum(Tape& tape, const Var& y) {
    Tensor w = random_tensor(y.shape(), 1234);
    std::vector<std::size_t> axes(y.shape().size());
    for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
    return ops::sum(ops::mul(y, tape.constant(w)), axes);
}


void expect_pass(const GradCheckReport& r, double tol) {
    EXPECT_TRUE(r.pass) << "max_rel_err=" << r.max_rel_err << " at " << r.worst;
    EXPECT_LE(r.max_rel_err, tol);
    EXPECT_GT(r.coords_checked, 0u);
}

std::vector<Parameter*> materialize_module(nn::Module& m, std::uint64_t seed) {
    std::vector<Parameter*> ps;
    std::mt19937_64 rng(seed);
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

}  // namespace

TEST(Autograd, SumGradientIsOnes) {
    Parameter w = make_param("w", Tensor::from_values({3}, {0.5, -2, 7}, DType::f64));
    Tape tape;
    Var loss = ops::sum(tape.param(w), {0});
    tape.backward(loss);
    EXPECT_EQ(w.grad().to_vector(), (std::vector<double>{1, 1, 1}));
    EXPECT_TRUE(w.grad_touched());
}

TEST(Autograd, ReluSubgradient) {
    Parameter w = make_param("w", Tensor::from_values({3}, {-1, 2, 0}, DType::f64));
    Tape tape;
    tape.backward(ops::sum(ops::relu(tape.param(w)), {0}));
    // relu'(0) is defined as 0
    EXPECT_EQ(w.grad().to_vector(), (std::vector<double>{0, 1, 0}));
}

TEST(Autograd, BackwardTwiceAccumulates) {
    Parameter w = make_param("w", random_tensor({4}, 3));
    auto run = [&] {
        Tape tape;
        Var x = tape.param(w);
        tape.backward(ops::sum(ops::mul(x, x), {0}));
    };
    run();
    Tensor once = w.grad().clone();
    run();
    auto a = once.to_vector(), b = w.grad().to_vector();
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(b[i], 2 * a[i]);
}

TEST(Autograd, UnreachableParametersUntouched) {
    Parameter used = make_param("a", random_tensor({2}, 1));
    Parameter unused = make_param("b", random_tensor({2}, 2));
    Tape tape;
    tape.param(unused);
    tape.backward(ops::sum(tape.param(used), {0}));
    EXPECT_FALSE(unused.grad_touched());
    EXPECT_EQ(unused.grad().to_vector(), (std::vector<double>{0, 0}));
}

TEST(Autograd, FrozenParametersGetNoGradient) {
    Parameter w = make_param("w", random_tensor({2}, 1));
    w.set_trainable(false);
    Tape tape;
    tape.backward(ops::sum(tape.param(w), {0}));
    EXPECT_FALSE(w.grad_touched());
}

TEST(Autograd, DetachedLossRejected) {
    Parameter w = make_param("w", random_tensor({2}, 1));
    Tape a, b;
    Var loss = ops::sum(a.param(w), {0});
    try {
        b.backward(loss);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DetachedLoss);
    }
    a.backward(loss);
    // The tape is consumed; the old handle is stale now.
    try {
        a.backward(loss);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DetachedLoss);
    }
}

TEST(Autograd, NonScalarLossRejected) {
    Parameter w = make_param("w", random_tensor({2}, 1));
    Tape tape;
    try {
        tape.backward(tape.param(w));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
    }
}

TEST(Autograd, SkipPathPassesUpstreamGradientUnchanged) {
    // Residual block with every residual-path weight zero: BN of a constant
    // zero map gives shift (=0), so y = relu(x) and dL/dx = upstream * [x>0].
    nn::ResidualSEBlock block(4, 4, 1, 0.0);
    auto ps = materialize_module(block, 5);
    for (Parameter* p : ps)
        if (p->name().rfind("conv", 0) == 0 || p->role() == ParamRole::bn_shift)
            p->assign(Tensor(p->shape(), DType::f64));
    Tensor x = random_tensor({2, 4, 5, 5}, 6, 0.1, 1.0);  // positive, so relu passes everything
    Parameter xin = make_param("x", x);
    Tape tape;
    std::mt19937_64 rng(0);
    nn::ForwardContext ctx{tape, Mode::train, rng};
    Var y = block.forward(tape.param(xin), ctx);
    EXPECT_TRUE(y.value().identical(x));
    Tensor up = random_tensor(x.shape(), 77);
    tape.backward(ops::sum(ops::mul(y, tape.constant(up)), {0, 1, 2, 3}));
    auto g = xin.grad().to_vector(), u = up.to_vector();
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], u[i], 1e-12);
}

TEST(GradCheck, SquareAtThree) {
    auto r = grad_check([](Tape&, const Var& x) { return ops::mul(x, x); },
                        Tensor::from_values({}, {3.0}, DType::f64), 1e-8);
    expect_pass(r, 1e-8);
}

TEST(GradCheck, DetectsWrongGradient) {
    // exp is right; a rule that drops a factor is caught.
    auto fn = [](Tape& tape, const Var& x) {
        Var y = tape.record(x.value().clone(), {x}, [x](Tape& t, const Tensor& g) { t.accumulate(x, scale(g, 0.5)); });
        return ops::sum(y, {0});
    };
    auto r = grad_check(fn, random_tensor({3}, 1), 1e-4);
    EXPECT_FALSE(r.pass);
    EXPECT_NEAR(r.max_rel_err, 0.5, 1e-6);
}

TEST(GradCheck, NondeterministicFunctionDetected) {
    auto counter = std::make_shared<int>(0);
    auto fn = [counter](Tape& tape, const Var& x) {
        ++*counter;
        return ops::add(ops::sum(x, {0}), tape.constant(Tensor::scalar(*counter, DType::f64)));
    };
    try {
        grad_check(fn, random_tensor({2}, 1), 1e-4);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NondeterministicFunction);
    }
}

TEST(GradCheck, ElementwiseOps) {
    Tensor p = random_tensor({2, 3}, 2, 0.2, 1.5);
    Tensor other = random_tensor({1, 3}, 3);
    auto check = [&](auto&& body) {
        auto r = grad_check([&](Tape& t, const Var& x) { return weighted_sum(t, body(t, x)); }, p, 1e-6);
        expect_pass(r, 1e-6);
    };
    check([&](Tape& t, const Var& x) { return ops::add(x, t.constant(other)); });
    check([&](Tape& t, const Var& x) { return ops::sub(t.constant(other), x); });
    check([&](Tape& t, const Var& x) { return ops::mul(x, t.constant(other)); });
    check([&](Tape&, const Var& x) { return ops::mul(x, x); });
    check([&](Tape&, const Var& x) { return ops::scale(x, -1.7); });
    check([&](Tape&, const Var& x) { return ops::sigmoid(x); });
    check([&](Tape&, const Var& x) { return ops::exp(x); });
    check([&](Tape&, const Var& x) { return ops::log(x); });
    check([&](Tape&, const Var& x) { return ops::relu(ops::sub(x, ops::scale(x, 0.0))); });
    check([&](Tape&, const Var& x) { return ops::reshape(x, {3, 2}); });
    check([&](Tape&, const Var& x) { return ops::mean(x, {1}, true); });
    check([&](Tape&, const Var& x) { return ops::sum(x, {0}); });
}

TEST(GradCheck, BroadcastOperandReceivesSummedGradient) {
    Tensor big = random_tensor({4, 3}, 4);
    auto r = grad_check([&](Tape& t, const Var& x) { return weighted_sum(t, ops::mul(t.constant(big), x)); },
                        random_tensor({1, 3}, 5), 1e-6);
    expect_pass(r, 1e-6);
}

TEST(GradCheck, MatmulAndLinear) {
    Tensor b = random_tensor({4, 5}, 6);
    expect_pass(grad_check([&](Tape& t, const Var& x) { return weighted_sum(t, ops::matmul(x, t.constant(b))); },
                           random_tensor({3, 4}, 7), 1e-6),
                1e-6);
    Parameter w = make_param("w", random_tensor({5, 4}, 8));
    Parameter bias = make_param("b", random_tensor({5}, 9), ParamRole::bias);
    Tensor x = random_tensor({3, 4}, 10);
    auto r = grad_check_parameters(
        [&](Tape& t) { return weighted_sum(t, ops::linear(t.constant(x), t.param(w), t.param(bias))); }, {&w, &bias},
        1e-6);
    expect_pass(r, 1e-6);
}

TEST(GradCheck, Conv2d) {
    for (std::size_t stride : {1, 2}) {
        Parameter w = make_param("w", random_tensor({4, 3, 3, 3}, 11));
        Parameter b = make_param("b", random_tensor({4}, 12), ParamRole::bias);
        Parameter x = make_param("x", random_tensor({2, 3, 6, 5}, 13));
        auto r = grad_check_parameters(
            [&](Tape& t) { return weighted_sum(t, ops::conv2d(t.param(x), t.param(w), t.param(b), stride, 1)); },
            {&w, &b, &x}, 1e-6);
        expect_pass(r, 1e-6);
    }
    Parameter w1 = make_param("w", random_tensor({2, 3, 1, 1}, 14));
    Parameter x1 = make_param("x", random_tensor({1, 3, 4, 4}, 15));
    auto r = grad_check_parameters(
        [&](Tape& t) { return weighted_sum(t, ops::conv2d(t.param(x1), t.param(w1), std::nullopt, 2, 0)); },
        {&w1, &x1}, 1e-6);
    expect_pass(r, 1e-6);
}

TEST(GradCheck, BatchNormTrainMode) {
    Parameter scale = make_param("scale", random_tensor({3}, 16, 0.5, 1.5), ParamRole::bn_scale);
    Parameter shift = make_param("shift", random_tensor({3}, 17), ParamRole::bn_shift);
    Parameter x = make_param("x", random_tensor({2, 3, 3, 4}, 18));
    Tensor rm({3}, DType::f64), rv = Tensor::full({3}, 1.0, DType::f64);
    auto r = grad_check_parameters(
        [&](Tape& t) {
            return weighted_sum(t, ops::batch_norm2d(t.param(x), t.param(scale), t.param(shift), rm, rv, Mode::train,
                                                     ops::BatchNormConfig{}));
        },
        {&scale, &shift, &x}, 1e-5);
    expect_pass(r, 1e-5);
}

TEST(BatchNorm, TrainModeStatisticsAndRunningUpdate) {
    Tensor x = random_tensor({4, 2, 3, 3}, 19);
    Tensor rm({2}, DType::f64), rv = Tensor::full({2}, 1.0, DType::f64);
    Parameter scale = make_param("s", Tensor::full({2}, 1.0, DType::f64), ParamRole::bn_scale);
    Parameter shift = make_param("b", Tensor({2}, DType::f64), ParamRole::bn_shift);
    Tape tape;
    Var y = ops::batch_norm2d(tape.constant(x), tape.param(scale), tape.param(shift), rm, rv, Mode::train,
                              ops::BatchNormConfig{});
    auto yv = y.value().to_vector(), xv = x.to_vector();
    for (std::size_t c = 0; c < 2; ++c) {
        double mean = 0, sq = 0, ymean = 0;
        std::size_t cnt = 0;
        for (std::size_t n = 0; n < 4; ++n)
            for (std::size_t i = 0; i < 9; ++i) {
                mean += xv[(n * 2 + c) * 9 + i];
                ymean += yv[(n * 2 + c) * 9 + i];
                ++cnt;
            }
        mean /= cnt;
        for (std::size_t n = 0; n < 4; ++n)
            for (std::size_t i = 0; i < 9; ++i) sq += std::pow(xv[(n * 2 + c) * 9 + i] - mean, 2);
        EXPECT_NEAR(ymean / cnt, 0.0, 1e-12);
        EXPECT_NEAR(rm.at(c), 0.1 * mean, 1e-12);
        EXPECT_NEAR(rv.at(c), 0.9 + 0.1 * sq / (cnt - 1), 1e-12);
    }
    // Eval mode uses running stats: y = (x - rm)/sqrt(rv + eps).
    Tape t2;
    Var ye = ops::batch_norm2d(t2.constant(x), t2.param(scale), t2.param(shift), rm, rv, Mode::eval,
                               ops::BatchNormConfig{});
    EXPECT_NEAR(ye.value().at(0), (x.at(0) - rm.at(0)) / std::sqrt(rv.at(0) + 1e-5), 1e-12);
}

TEST(GradCheck, PoolingOps) {
    Tensor p = random_tensor({2, 3, 7, 6}, 20);
    expect_pass(grad_check([](Tape& t, const Var& x) { return weighted_sum(t, ops::max_pool2d(x, 3, 2, 1)); }, p, 1e-6),
                1e-6);
    expect_pass(
        grad_check([](Tape& t, const Var& x) { return weighted_sum(t, ops::adaptive_avg_pool2d(x, 3, 4)); }, p, 1e-6),
        1e-6);
    expect_pass(grad_check([](Tape& t, const Var& x) { return weighted_sum(t, ops::global_avg_pool(x)); }, p, 1e-6),
                1e-6);
}

TEST(Dropout, EvalIsIdentityAndTrainIsInverted) {
    std::mt19937_64 rng(1);
    Tensor x = Tensor::full({1000}, 1.0, DType::f64);
    Tape tape;
    Var xe = tape.constant(x);
    EXPECT_TRUE(ops::dropout(xe, 0.5, Mode::eval, rng).value().identical(x));
    auto v = ops::dropout(xe, 0.5, Mode::train, rng).value().to_vector();
    std::size_t kept = 0;
    for (double e : v) {
        EXPECT_TRUE(e == 0.0 || e == 2.0);
        kept += e != 0.0;
    }
    EXPECT_NEAR(double(kept) / 1000.0, 0.5, 0.06);
    // dropout2d zeroes whole feature maps
    auto m = ops::dropout2d(tape.constant(Tensor::full({4, 8, 3, 3}, 1.0, DType::f64)), 0.5, Mode::train, rng)
                 .value()
                 .to_vector();
    for (std::size_t nc = 0; nc < 32; ++nc)
        for (std::size_t i = 1; i < 9; ++i) EXPECT_EQ(m[nc * 9 + i], m[nc * 9]);
}

TEST(GradCheck, DropoutMaskIsRecorded) {
    // Same seed for every evaluation -> same mask -> deterministic function.
    auto fn = [](Tape& t, const Var& x) {
        std::mt19937_64 rng(42);
        return weighted_sum(t, ops::dropout(x, 0.3, Mode::train, rng));
    };
    expect_pass(grad_check(fn, random_tensor({20}, 21), 1e-6), 1e-6);
}

TEST(GradCheck, ResidualSEBlockAtOneByEight) {
    for (std::size_t stride : {1, 2}) {
        nn::ResidualSEBlock block(8, 8, stride, 0.0);
        auto params = materialize_module(block, 30 + stride);
        Parameter x = make_param("x", random_tensor({1, 8, 6, 6}, 31));
        params.push_back(&x);
        auto fn = [&](Tape& t) {
            std::mt19937_64 rng(0);
            nn::ForwardContext ctx{t, Mode::train, rng};
            return weighted_sum(t, block.forward(t.param(x), ctx));
        };
        auto r = grad_check_parameters(fn, params, 1e-4);
        expect_pass(r, 1e-4);
    }
}

TEST(GradCheck, SEGateBoundedAndSpatiallyConstant) {
    nn::SEBlock se(16);
    materialize_module(se, 40);
    Tape t;
    std::mt19937_64 rng(0);
    nn::ForwardContext ctx{t, Mode::eval, rng};
    Tensor x = random_tensor({2, 16, 4, 4}, 41, -50, 50);
    Var g = se.gate(t.constant(x), ctx);
    ASSERT_EQ(g.shape(), (Shape{2, 16}));
    for (double s : g.value().to_vector()) {
        EXPECT_GT(s, 0.0);
        EXPECT_LT(s, 1.0);
    }
    Var y = se.forward(t.constant(x), ctx);
    auto yv = y.value().to_vector(), xv = x.to_vector(), gv = g.value().to_vector();
    for (std::size_t nc = 0; nc < 32; ++nc)
        for (std::size_t i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(yv[nc * 16 + i], xv[nc * 16 + i] * gv[nc]);
}

TEST(GradCheck, SEZeroWeightsHalveInput) {
    nn::SEBlock se(32);
    nn::visit_parameters(se, [](const std::string&, Parameter& p) { p.materialize(DType::f64); });
    Tape t;
    std::mt19937_64 rng(0);
    nn::ForwardContext ctx{t, Mode::eval, rng};
    Tensor x = random_tensor({1, 32, 3, 3}, 42);
    auto y = se.forward(t.constant(x), ctx).value().to_vector();
    auto xv = x.to_vector();
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], 0.5 * xv[i]);
    EXPECT_EQ(se.hidden(), 2u);
}

TEST(GradCheck, SampledCoordinatesAreSeeded) {
    Parameter w = make_param("w", random_tensor({50}, 1));
    GradCheckOptions opts;
    opts.max_coords_per_tensor = 5;
    auto fn = [&](Tape& t) { return weighted_sum(t, ops::exp(t.param(w))); };
    auto r = grad_check_parameters(fn, {&w}, 1e-6, opts);
    EXPECT_EQ(r.coords_checked, 5u);
    expect_pass(r, 1e-6);
}

TEST(GradSuite, EveryScopePassesAndIsRepeatable) {
    for (auto scope : {GradScope::layers, GradScope::blocks, GradScope::model}) {
        const auto a = run_grad_suite(scope, 1e-4, 3);
        const auto b = run_grad_suite(scope, 1e-4, 3);
        ASSERT_FALSE(a.empty());
        ASSERT_EQ(a.size(), b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            EXPECT_TRUE(a[i].report.pass) << a[i].unit << " " << a[i].report.max_rel_err << " at " << a[i].report.worst;
            EXPECT_EQ(a[i].report.max_rel_err, b[i].report.max_rel_err) << a[i].unit;
        }
    }
    EXPECT_EQ(parse_grad_scope("blocks"), GradScope::blocks);
    EXPECT_FALSE(parse_grad_scope("everything").has_value());
}
