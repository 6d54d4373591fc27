#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "secnn/tensor.hpp"

using namespace secnn;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, DType dt = DType::f64) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = d(rng);
    return Tensor::from_values(std::move(shape), v, dt);
}

void expect_values(const Tensor& t, const std::vector<double>& expected, double tol = 0.0) {
    auto got = t.to_vector();
    ASSERT_EQ(got.size(), expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expected[i], tol) << "index " << i;
}

template <class F>
void expect_error(ErrorKind kind, F&& f) {
    try {
        f();
        ADD_FAILURE() << "expected " << to_string(kind);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), kind) << e.what();
    }
}

}  // namespace

TEST(Tensor, ConstructionInvariants) {
    Tensor t({2, 3});
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_EQ(t.dtype(), DType::f32);
    Tensor s;
    EXPECT_EQ(s.rank(), 0u);
    EXPECT_EQ(s.numel(), 1u);
    expect_error(ErrorKind::ShapeMismatch, [] { Tensor({2, 0}); });
    expect_error(ErrorKind::ShapeMismatch, [] { Tensor::from_values({3}, {1, 2}); });
    expect_error(ErrorKind::DtypeMismatch, [] { Tensor({2}).data<double>(); });
}

TEST(Tensor, ReluExample) { expect_values(relu(Tensor::from_values({3}, {-1, 0, 2})), {0, 0, 2}); }

TEST(Tensor, AddBroadcastScalar) {
    Tensor r = add(Tensor::from_values({2}, {1, 2}), Tensor::scalar(3));
    EXPECT_EQ(r.shape(), Shape{2});
    expect_values(r, {4, 5});
}

TEST(Tensor, SigmoidAtZero) { EXPECT_EQ(sigmoid(Tensor::scalar(0)).item(), 0.5); }

TEST(Tensor, SigmoidIsStableForLargeInputs) {
    auto v = sigmoid(Tensor::from_values({2}, {-1000, 1000}, DType::f64)).to_vector();
    EXPECT_EQ(v[0], 0.0);
    EXPECT_EQ(v[1], 1.0);
}

TEST(Tensor, BroadcastRules) {
    EXPECT_EQ(broadcast_shape({2, 1, 4}, {3, 1}), (Shape{2, 3, 4}));
    expect_error(ErrorKind::ShapeMismatch, [] { broadcast_shape({2, 3}, {4}); });
    expect_error(ErrorKind::ShapeMismatch,
                 [] { add(Tensor::from_values({2}, {1, 2}), Tensor::from_values({3}, {1, 2, 3})); });
    expect_error(ErrorKind::DtypeMismatch, [] { add(Tensor({2}, DType::f32), Tensor({2}, DType::f64)); });
    Tensor col = Tensor::from_values({2, 1}, {10, 20});
    Tensor row = Tensor::from_values({1, 3}, {1, 2, 3});
    expect_values(add(col, row), {11, 12, 13, 21, 22, 23});
    expect_values(mul(row, col), {10, 20, 30, 20, 40, 60});
}

TEST(Tensor, SumToReversesBroadcast) {
    Tensor g = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
    expect_values(sum_to(g, {1, 3}), {5, 7, 9});
    expect_values(sum_to(g, {2, 1}), {6, 15});
    expect_values(sum_to(g, {}), {21});
}

TEST(Tensor, BinaryOpsCommute) {
    Tensor a = random_tensor({3, 4}, 1), b = random_tensor({1, 4}, 2);
    EXPECT_TRUE(add(a, b).identical(add(b, a)));
    EXPECT_TRUE(mul(a, b).identical(mul(b, a)));
}

TEST(Tensor, MatmulIdentity) {
    Tensor eye = Tensor::from_values({2, 2}, {1, 0, 0, 1});
    Tensor m = Tensor::from_values({2, 2}, {1, 2, 3, 4});
    expect_values(matmul(eye, m), {1, 2, 3, 4});
}

TEST(Tensor, MatmulHandDot) {
    Tensor r = matmul(Tensor::from_values({1, 2}, {1, 2}), Tensor::from_values({2, 1}, {3, 4}));
    EXPECT_EQ(r.shape(), (Shape{1, 1}));
    EXPECT_EQ(r.item(), 11);
}

TEST(Tensor, MatmulMatchesTripleLoop) {
    for (DType dt : {DType::f32, DType::f64}) {
        Tensor a = random_tensor({3, 4}, 5, dt), b = random_tensor({4, 5}, 6, dt);
        Tensor c = matmul(a, b);
        auto av = a.to_vector(), bv = b.to_vector(), cv = c.to_vector();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 5; ++j) {
                double s = 0;
                for (int k = 0; k < 4; ++k) s += av[i * 4 + k] * bv[k * 5 + j];
                EXPECT_NEAR(cv[i * 5 + j], s, 1e-6 * std::max(1.0, std::abs(s)));
            }
    }
    expect_error(ErrorKind::ShapeMismatch, [] { matmul(Tensor({2, 3}), Tensor({2, 3})); });
}

TEST(Tensor, Transpose) {
    expect_values(transpose2d(Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6})), {1, 4, 2, 5, 3, 6});
}

TEST(Tensor, Im2colPreservesResolution) {
    Tensor cols = im2col(random_tensor({1, 1, 3, 3}, 1), Window{3, 3, 1, 1});
    EXPECT_EQ(cols.shape(), (Shape{1, 9, 9}));
}

TEST(Tensor, Im2colStrideTwo) {
    Tensor cols = im2col(random_tensor({1, 1, 4, 4}, 1), Window{3, 3, 2, 1});
    EXPECT_EQ(cols.shape(), (Shape{1, 9, 4}));
    EXPECT_EQ(conv_out_extent(4, 3, 2, 1), 2u);
}

TEST(Tensor, Im2colRejectsEmptyOutput) {
    expect_error(ErrorKind::ShapeMismatch, [] { im2col(Tensor({1, 1, 2, 2}), Window{3, 3, 1, 0}); });
}

TEST(Tensor, Im2colConvolutionMatchesDirectLoops) {
    const std::size_t n = 2, cin = 3, h = 8, w = 8, cout = 4, k = 3, stride = 1, pad = 1;
    Tensor x = random_tensor({n, cin, h, w}, 21);
    Tensor wt = random_tensor({cout, cin, k, k}, 22);
    Tensor cols = im2col(x, Window{k, k, stride, pad});  // [n, cin*k*k, ho*wo]
    const std::size_t ho = conv_out_extent(h, k, stride, pad), wo = conv_out_extent(w, k, stride, pad);
    Tensor wmat = wt.reshape({cout, cin * k * k});
    auto xv = x.to_vector(), wv = wt.to_vector();
    const auto colv = cols.to_vector();
    const std::size_t per = cin * k * k * ho * wo;
    for (std::size_t s = 0; s < n; ++s) {
        Tensor cs = Tensor::from_values({cin * k * k, ho * wo},
                                        std::vector<double>(colv.begin() + s * per, colv.begin() + (s + 1) * per),
                                        DType::f64);
        auto y = matmul(wmat, cs).to_vector();
        for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t oy = 0; oy < ho; ++oy)
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    double acc = 0;
                    for (std::size_t ci = 0; ci < cin; ++ci)
                        for (std::size_t ky = 0; ky < k; ++ky)
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const long iy = long(oy * stride + ky) - long(pad);
                                const long ix = long(ox * stride + kx) - long(pad);
                                if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(w)) continue;
                                acc += xv[((s * cin + ci) * h + iy) * w + ix] * wv[((co * cin + ci) * k + ky) * k + kx];
                            }
                    EXPECT_NEAR(y[co * ho * wo + oy * wo + ox], acc, 1e-6);
                }
    }
}

TEST(Tensor, Col2imRoundTripNonOverlapping) {
    Tensor x = random_tensor({2, 3, 6, 6}, 9);
    Window win{2, 2, 2, 0};
    Tensor back = col2im(im2col(x, win), x.shape(), win);
    EXPECT_TRUE(back.identical(x));
}

TEST(Tensor, ReduceMeanAll) {
    EXPECT_EQ(reduce(ReduceOp::mean, Tensor::from_values({2, 2}, {1, 3, 5, 7}), {0, 1}, false).item(), 4);
}

TEST(Tensor, ReduceEmptyAxesIsCopy) {
    Tensor t = random_tensor({2, 3}, 4);
    Tensor r = reduce(ReduceOp::sum, t, {}, false);
    EXPECT_TRUE(r.identical(t));
    EXPECT_FALSE(r.shares_storage_with(t));
}

TEST(Tensor, ReduceSpatialMeanMatchesLoops) {
    Tensor t = random_tensor({2, 4, 5, 5}, 8);
    Tensor r = reduce(ReduceOp::mean, t, {2, 3}, false);
    ASSERT_EQ(r.shape(), (Shape{2, 4}));
    Tensor kept = reduce(ReduceOp::mean, t, {2, 3}, true);
    EXPECT_EQ(kept.shape(), (Shape{2, 4, 1, 1}));
    auto v = t.to_vector();
    for (std::size_t nc = 0; nc < 8; ++nc) {
        double s = 0;
        for (std::size_t i = 0; i < 25; ++i) s += v[nc * 25 + i];
        EXPECT_NEAR(r.at(nc), s / 25, 1e-12);
    }
}

TEST(Tensor, ReduceMaxAndErrors) {
    Tensor t = Tensor::from_values({2, 3}, {1, 9, 3, 4, 2, 8});
    expect_values(reduce(ReduceOp::max, t, {1}, false), {9, 8});
    expect_error(ErrorKind::InvalidAxis, [&] { reduce(ReduceOp::sum, t, {2}, false); });
    expect_error(ErrorKind::InvalidAxis, [&] { reduce(ReduceOp::sum, t, {0, 0}, false); });
}

TEST(Tensor, CopiesShareCloneDoesNot) {
    Tensor a = Tensor::from_values({2}, {1, 2});
    Tensor b = a;
    Tensor c = a.clone();
    a.mutable_data<float>()[0] = 5;
    EXPECT_EQ(b.at(0), 5);
    EXPECT_EQ(c.at(0), 1);
    Tensor r = a.reshape({2, 1});
    EXPECT_TRUE(r.shares_storage_with(a));
    expect_error(ErrorKind::ShapeMismatch, [&] { a.reshape({3}); });
}

TEST(Tensor, SerializationRoundTrip) {
    for (DType dt : {DType::f32, DType::f64}) {
        Tensor t = random_tensor({2, 3, 4}, 17, dt);
        std::stringstream ss;
        write_tensor(ss, t);
        EXPECT_TRUE(read_tensor(ss).identical(t));
    }
    std::stringstream trunc;
    write_tensor(trunc, random_tensor({4}, 1));
    std::string bytes = trunc.str();
    std::stringstream cut(bytes.substr(0, bytes.size() - 3));
    expect_error(ErrorKind::CorruptCheckpoint, [&] { read_tensor(cut); });
}

TEST(Tensor, ShapeIsPureFunctionOfInputShapes) {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<std::size_t> ext(1, 4);
    for (int trial = 0; trial < 50; ++trial) {
        Shape a{ext(rng), ext(rng), ext(rng)};
        Shape b = a;
        b[trial % 3] = 1;
        Tensor x = random_tensor(a, trial), y = random_tensor(b, trial + 1);
        EXPECT_EQ(add(x, y).shape(), a);
        EXPECT_EQ(reduce(ReduceOp::sum, x, {1}, true).shape(), (Shape{a[0], 1, a[2]}));
    }
}
