#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "secnn/gradcheck.hpp"
#include "secnn/optim.hpp"

using namespace secnn;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0, DType dt = DType::f64) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = d(rng);
    return Tensor::from_values(std::move(shape), v, dt);
}

Parameter make_param(const std::string& name, Tensor value, ParamRole role = ParamRole::weight) {
    Parameter p(name, value.shape(), role);
    p.assign(value);
    return p;
}

void set_grad(Parameter& p, const Tensor& g) {
    p.zero_grad();
    p.grad() = g.to(p.value().dtype());
    p.mark_grad_touched();
}

AdamConfig cfg(double wd) {
    AdamConfig c;
    c.lr = 1e-2;
    c.weight_decay = wd;
    return c;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParameterUnchanged) {
    Parameter p = make_param("w", random_tensor({5}, 1));
    Tensor before = p.value().clone();
    Adam opt({&p}, cfg(0.0));
    set_grad(p, Tensor({5}, DType::f64));
    opt.step();
    EXPECT_TRUE(p.value().identical(before));
    for (double x : opt.first_moment(0).to_vector()) EXPECT_EQ(x, 0.0);
    for (double x : opt.second_moment(0).to_vector()) EXPECT_EQ(x, 0.0);
    EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    for (double g : {0.3, -2.0, 1e3}) {
        Parameter p = make_param("w", Tensor::from_values({}, {1.0}, DType::f64));
        Adam opt({&p}, cfg(0.0));
        set_grad(p, Tensor::scalar(g, DType::f64));
        opt.step();
        EXPECT_NEAR(p.value().item(), 1.0 - 1e-2 * (g > 0 ? 1 : -1), 1e-8) << g;
    }
}

TEST(Adam, MatchesClosedFormOverSteps) {
    Parameter p = make_param("w", random_tensor({6}, 2));
    AdamConfig c = cfg(1e-2);
    Adam opt({&p}, c);
    std::vector<double> val = p.value().to_vector(), m(6, 0.0), v(6, 0.0);
    for (int t = 1; t <= 5; ++t) {
        Tensor g = random_tensor({6}, 100 + t);
        set_grad(p, g);
        opt.step();
        auto gv = g.to_vector();
        for (int i = 0; i < 6; ++i) {
            const double gi = gv[i] + c.weight_decay * val[i];
            m[i] = c.beta1 * m[i] + (1 - c.beta1) * gi;
            v[i] = c.beta2 * v[i] + (1 - c.beta2) * gi * gi;
            const double mh = m[i] / (1 - std::pow(c.beta1, t)), vh = v[i] / (1 - std::pow(c.beta2, t));
            val[i] -= c.lr * mh / (std::sqrt(vh) + c.eps);
        }
        auto got = p.value().to_vector();
        for (int i = 0; i < 6; ++i) EXPECT_NEAR(got[i], val[i], 1e-12);
    }
}

TEST(Adam, DecaySkipsBatchNormAndBiases) {
    for (ParamRole role : {ParamRole::bn_scale, ParamRole::bn_shift, ParamRole::bias}) {
        Parameter a = make_param("a", random_tensor({8}, 3), role);
        Parameter b = make_param("b", random_tensor({8}, 3), role);
        Adam with({&a}, cfg(1e-4)), without({&b}, cfg(0.0));
        for (int t = 0; t < 3; ++t) {
            Tensor g = random_tensor({8}, 10 + t);
            set_grad(a, g);
            set_grad(b, g);
            with.step();
            without.step();
        }
        EXPECT_TRUE(a.value().identical(b.value()));
    }
    Parameter a = make_param("a", random_tensor({8}, 3, 1.0, 2.0));
    Parameter b = make_param("b", random_tensor({8}, 3, 1.0, 2.0));
    Adam with({&a}, cfg(0.5)), without({&b}, cfg(0.0));
    Tensor g = random_tensor({8}, 9, -1e-3, 1e-3);
    set_grad(a, g);
    set_grad(b, g);
    with.step();
    without.step();
    EXPECT_FALSE(a.value().identical(b.value()));
}

TEST(Adam, FrozenUntouchedAndMissingGradReported) {
    Parameter frozen = make_param("f", random_tensor({3}, 4));
    frozen.set_trainable(false);
    Parameter live = make_param("l", random_tensor({3}, 5));
    Tensor before = frozen.value().clone();
    Adam opt({&frozen, &live}, cfg(1e-4));
    try {
        opt.step();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MissingGrad);
        EXPECT_NE(std::string(e.what()).find("l"), std::string::npos);
    }
    set_grad(live, random_tensor({3}, 6));
    opt.step();
    EXPECT_TRUE(frozen.value().identical(before));
}

TEST(Adam, ParameterOrderIndependent) {
    Parameter a1 = make_param("a", random_tensor({4}, 7)), b1 = make_param("b", random_tensor({3}, 8));
    Parameter a2 = make_param("a", random_tensor({4}, 7)), b2 = make_param("b", random_tensor({3}, 8));
    Adam o1({&a1, &b1}, cfg(0.0)), o2({&b2, &a2}, cfg(0.0));
    for (int t = 0; t < 3; ++t) {
        Tensor ga = random_tensor({4}, 20 + t), gb = random_tensor({3}, 30 + t);
        set_grad(a1, ga), set_grad(a2, ga), set_grad(b1, gb), set_grad(b2, gb);
        o1.step();
        o2.step();
    }
    EXPECT_TRUE(a1.value().identical(a2.value()));
    EXPECT_TRUE(b1.value().identical(b2.value()));
}

TEST(Adam, RejectsBadConfig) {
    AdamConfig c;
    c.lr = 0;
    EXPECT_THROW(Adam({}, c), Error);
    c = AdamConfig{};
    c.beta1 = 1.0;
    EXPECT_THROW(Adam({}, c), Error);
}

TEST(CrossEntropy, UniformTwoClass) {
    auto r = cross_entropy(Tensor::from_values({3, 2}, {0, 0, 5, 5, -1, -1}, DType::f64), {0, 1, 1});
    EXPECT_NEAR(r.loss, std::log(2.0), 1e-12);
}

TEST(CrossEntropy, LargeLogitsStable) {
    auto r = cross_entropy(Tensor::from_values({1, 2}, {1000, 0}), {0});
    EXPECT_TRUE(std::isfinite(r.loss));
    EXPECT_NEAR(r.loss, 0.0, 1e-12);
    auto r2 = cross_entropy(Tensor::from_values({1, 2}, {1000, 0}), {1});
    EXPECT_NEAR(r2.loss, 1000.0, 1e-9);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    std::vector<int> labels(8);
    for (auto& y : labels) y = static_cast<int>(rng() % 15);
    auto r = grad_check([&](Tape&, const Var& x) { return ops::cross_entropy(x, labels); },
                        random_tensor({8, 15}, 11, -3, 3), 1e-6);
    EXPECT_TRUE(r.pass) << r.max_rel_err;
}

TEST(CrossEntropy, ShiftInvarianceAndRowSums) {
    Tensor x = random_tensor({4, 5}, 12, -2, 2);
    std::vector<int> y{0, 4, 2, 2};
    auto a = cross_entropy(x, y);
    auto b = cross_entropy(add(x, Tensor::from_values({4, 1}, {3, -7, 100, 0.5}, DType::f64)), y);
    EXPECT_NEAR(a.loss, b.loss, 1e-12);
    auto da = a.dlogits.to_vector(), db = b.dlogits.to_vector();
    for (std::size_t i = 0; i < da.size(); ++i) EXPECT_NEAR(da[i], db[i], 1e-12);
    for (int i = 0; i < 4; ++i) {
        double s = 0;
        for (int j = 0; j < 5; ++j) s += da[i * 5 + j];
        EXPECT_NEAR(s, 0.0, 1e-15);
    }
    EXPECT_GE(a.loss, 0.0);
}

TEST(CrossEntropy, LabelOutOfRange) {
    for (int bad : {-1, 3}) {
        try {
            cross_entropy(Tensor({1, 3}), {bad});
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::LabelOutOfRange);
        }
    }
}

TEST(Softmax, RowsSumToOne) {
    auto p = softmax(random_tensor({3, 4}, 13, -5, 5)).to_vector();
    for (int i = 0; i < 3; ++i) {
        double s = 0;
        for (int j = 0; j < 4; ++j) s += p[i * 4 + j];
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}
