#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <unistd.h>

#include "secnn/data.hpp"

using namespace secnn;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("secnn_data_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

Image solid(std::size_t w, std::size_t h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    Image img{w, h, {}};
    for (std::size_t i = 0; i < w * h; ++i) img.rgb.insert(img.rgb.end(), {r, g, b});
    return img;
}

Image random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Image img{w, h, std::vector<std::uint8_t>(w * h * 3)};
    for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng() & 0xff);
    return img;
}

void make_class_tree(const fs::path& root, const std::vector<std::size_t>& sizes) {
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        fs::create_directories(root / ("c" + std::to_string(k)));
        for (std::size_t i = 0; i < sizes[k]; ++i)
            write_ppm(root / ("c" + std::to_string(k)) / ("f" + std::to_string(1000 + i) + ".ppm"), solid(4, 4, 10 * k, 0, 0));
    }
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

AugmentSpec eval_spec(std::size_t h, std::size_t w) {
    AugmentSpec s;
    s.height = h;
    s.width = w;
    return s;
}

}  // namespace

TEST(Ppm, RoundTripAndComments) {
    Image img = random_image(5, 3, 1);
    auto bytes = encode_ppm(img);
    Image back = decode_ppm(bytes);
    EXPECT_EQ(back.width, 5u);
    EXPECT_EQ(back.height, 3u);
    EXPECT_EQ(back.rgb, img.rgb);
    std::string hdr = "P6\n# a comment\n5 3\n# another\n255\n";
    std::vector<std::uint8_t> with(hdr.begin(), hdr.end());
    with.insert(with.end(), img.rgb.begin(), img.rgb.end());
    EXPECT_EQ(decode_ppm(with).rgb, img.rgb);
}

TEST(Ppm, RejectsBadInput) {
    auto bytes = encode_ppm(random_image(4, 4, 2));
    auto truncated = bytes;
    truncated.resize(truncated.size() - 1);
    expect_error(ErrorKind::UndecodableImage, [&] { decode_ppm(truncated); });
    auto p3 = bytes;
    p3[1] = '3';
    expect_error(ErrorKind::UndecodableImage, [&] { decode_ppm(p3); });
    std::string deep = "P6\n1 1\n65535\n\0\0\0\0\0\0";
    expect_error(ErrorKind::UndecodableImage, [&] { decode_ppm({deep.begin(), deep.end()}); });
    expect_error(ErrorKind::UndecodableImage, [] { read_ppm("/nonexistent/x.ppm"); });
}

TEST(Transform, ConstantGrayEvalIsClosedForm) {
    Image img = solid(10, 7, 128, 128, 128);
    std::mt19937_64 rng(0);
    AugmentSpec spec = eval_spec(16, 16);
    Tensor t = transform(img, spec, Mode::eval, rng);
    ASSERT_EQ(t.shape(), (Shape{3, 16, 16}));
    auto v = t.to_vector();
    for (std::size_t c = 0; c < 3; ++c) {
        const double expected = (128.0 / 255.0 - kImageNetMean[c]) / kImageNetStd[c];
        for (std::size_t i = 0; i < 256; ++i) EXPECT_NEAR(v[c * 256 + i], expected, 1e-6);
    }
}

TEST(Transform, EvalOfSmallPpmMatchesHandReference) {
    TempDir dir;
    Image img = random_image(8, 8, 3);
    write_ppm(dir.path() / "a.ppm", img);
    std::mt19937_64 rng(0);
    Tensor t = load_and_transform(dir.path() / "a.ppm", eval_spec(8, 8), Mode::eval, rng);
    auto v = t.to_vector();
    for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                const float px = static_cast<float>(img.rgb[(y * 8 + x) * 3 + c]) / 255.0f;
                const float expected = static_cast<float>((px - kImageNetMean[c]) / kImageNetStd[c]);
                EXPECT_EQ(static_cast<float>(v[(c * 8 + y) * 8 + x]), expected);
            }
    // Eval mode draws no randomness: two loads are bitwise equal.
    std::mt19937_64 other(99);
    EXPECT_TRUE(t.identical(load_and_transform(dir.path() / "a.ppm", eval_spec(8, 8), Mode::eval, other)));
}

TEST(Transform, ResizeHalfPixelCenters) {
    // 1x2 -> 1x4 along width: source centers at 0.5 and 1.5.
    Tensor src = Tensor::from_values({3, 1, 2}, {0, 1, 0, 1, 0, 1});
    auto v = resize_bilinear(src, 1, 4).to_vector();
    EXPECT_NEAR(v[0], 0.0, 1e-7);
    EXPECT_NEAR(v[1], 0.25, 1e-7);
    EXPECT_NEAR(v[2], 0.75, 1e-7);
    EXPECT_NEAR(v[3], 1.0, 1e-7);
    // Downscale by 2 averages pixel pairs.
    Tensor wide = Tensor::from_values({3, 1, 4}, {0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3});
    auto d = resize_bilinear(wide, 1, 2).to_vector();
    EXPECT_NEAR(d[0], 0.5, 1e-7);
    EXPECT_NEAR(d[1], 2.5, 1e-7);
}

TEST(Transform, HflipIsInvolution) {
    Tensor t = to_tensor(random_image(7, 5, 4));
    Tensor f = hflip(t);
    EXPECT_FALSE(f.identical(t));
    EXPECT_TRUE(hflip(f).identical(t));
    EXPECT_EQ(f.at(0), t.at(6));
}

TEST(Transform, RotateZeroAndQuarterTurn) {
    Tensor t = to_tensor(random_image(5, 5, 5));
    auto same = rotate(t, 0.0).to_vector(), orig = t.to_vector();
    for (std::size_t i = 0; i < orig.size(); ++i) EXPECT_NEAR(same[i], orig[i], 1e-6);
    // 360 degrees is identity up to rounding; corners of a 90 degree turn move.
    auto full = rotate(t, 360.0).to_vector();
    for (std::size_t i = 0; i < orig.size(); ++i) EXPECT_NEAR(full[i], orig[i], 1e-5);
    auto q = rotate(t, 90.0).to_vector();
    // Counter-clockwise: the top-right source pixel lands top-left.
    EXPECT_NEAR(q[0], orig[4], 1e-5);
    // Rotating a constant image by 45 degrees blackens the corners only.
    Tensor ones = Tensor::full({3, 9, 9}, 1.0);
    auto r = rotate(ones, 45.0).to_vector();
    EXPECT_LT(r[0], 0.5);
    EXPECT_NEAR(r[4 * 9 + 4], 1.0, 1e-6);
}

TEST(Transform, JitterIdentityAtFactorOne) {
    Tensor t = to_tensor(random_image(6, 6, 6));
    EXPECT_TRUE(adjust_brightness(t, 1.0).identical(t));
    auto c = adjust_contrast(t, 1.0).to_vector(), s = adjust_saturation(t, 1.0).to_vector(), o = t.to_vector();
    for (std::size_t i = 0; i < o.size(); ++i) {
        EXPECT_NEAR(c[i], o[i], 1e-6);
        EXPECT_NEAR(s[i], o[i], 1e-6);
    }
    // Saturation 0 is grayscale: channels equal.
    auto g = adjust_saturation(t, 0.0).to_vector();
    for (std::size_t i = 0; i < 36; ++i) {
        EXPECT_NEAR(g[i], g[36 + i], 1e-6);
        EXPECT_NEAR(g[i], g[72 + i], 1e-6);
    }
}

TEST(Transform, NormalizeInvertible) {
    Tensor t = to_tensor(random_image(9, 4, 7));
    auto back = denormalize(normalize(t, kImageNetMean, kImageNetStd), kImageNetMean, kImageNetStd).to_vector();
    auto o = t.to_vector();
    for (std::size_t i = 0; i < o.size(); ++i) EXPECT_NEAR(back[i], o[i], 1e-6);
}

TEST(Transform, TrainModeIsSeededAndValidates) {
    Image img = random_image(12, 12, 8);
    AugmentSpec spec = eval_spec(12, 12);
    std::mt19937_64 a(5), b(5);
    EXPECT_TRUE(transform(img, spec, Mode::train, a).identical(transform(img, spec, Mode::train, b)));
    spec.hflip_prob = 2.0;
    expect_error(ErrorKind::InvalidConfig, [&] { spec.validate(); });
    spec = eval_spec(12, 12);
    spec.std[1] = 0.0;
    expect_error(ErrorKind::InvalidConfig, [&] { spec.validate(); });
}

TEST(Index, StratifiedCounts) {
    TempDir dir;
    make_class_tree(dir.path(), {60, 40, 5});
    DatasetIndex idx = build_index(dir.path(), 0.2, 1);
    ASSERT_EQ(idx.classes, (std::vector<std::string>{"c0", "c1", "c2"}));
    std::map<std::pair<int, Split>, int> counts;
    for (const auto& s : idx.samples) ++counts[{s.label, s.split}];
    EXPECT_EQ((counts[{0, Split::train}]), 48);
    EXPECT_EQ((counts[{0, Split::val}]), 12);
    EXPECT_EQ((counts[{1, Split::train}]), 32);
    EXPECT_EQ((counts[{1, Split::val}]), 8);
    EXPECT_EQ((counts[{2, Split::val}]), 1);
}

TEST(Index, DeterministicPerSeed) {
    TempDir dir;
    make_class_tree(dir.path(), {20, 15});
    auto tags = [](const DatasetIndex& idx) {
        std::vector<Split> v;
        for (const auto& s : idx.samples) v.push_back(s.split);
        return v;
    };
    EXPECT_EQ(tags(build_index(dir.path(), 0.2, 3)), tags(build_index(dir.path(), 0.2, 3)));
    EXPECT_NE(tags(build_index(dir.path(), 0.2, 3)), tags(build_index(dir.path(), 0.2, 4)));
}

TEST(Index, Errors) {
    TempDir dir;
    expect_error(ErrorKind::NoClasses, [&] { build_index(dir.path() / "missing"); });
    expect_error(ErrorKind::NoClasses, [&] { build_index(dir.path()); });
    make_class_tree(dir.path(), {3, 3});
    fs::create_directories(dir.path() / "c2");
    expect_error(ErrorKind::EmptyClass, [&] { build_index(dir.path()); });
    fs::remove(dir.path() / "c2");
    std::ofstream(dir.path() / "c1" / "broken.ppm") << "not an image";
    try {
        build_index(dir.path());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::UndecodableImage);
        EXPECT_NE(std::string(e.what()).find("broken.ppm"), std::string::npos);
    }
}

TEST(Index, SplitPropertyOverRandomClassSizes) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t k = 2 + rng() % 6;
        for (std::size_t c = 0; c < k; ++c) {
            const std::size_t n = 1 + rng() % 200;
            auto tags = assign_class_splits(n, 0.2, mix_seed(trial, c));
            const auto val = static_cast<double>(std::count(tags.begin(), tags.end(), Split::val));
            EXPECT_LE(std::abs(val - 0.2 * static_cast<double>(n)), 1.0) << "n=" << n;
        }
    }
}

TEST(Batches, SizesOrderAndPartition) {
    TempDir dir;
    make_class_tree(dir.path(), {40, 30});
    DatasetIndex idx = build_index(dir.path(), 0.0, 0);
    ASSERT_EQ(idx.count(Split::train), 70u);
    AugmentSpec spec = eval_spec(4, 4);
    BatchStream stream(idx, Split::train, spec, BatchOptions{32, false, 0, 0, false});
    EXPECT_EQ(stream.num_batches(), 3u);
    std::vector<std::size_t> sizes, ids;
    std::multiset<int> labels;
    Batch b;
    while (stream.next(b)) {
        sizes.push_back(b.labels.size());
        EXPECT_EQ(b.images.shape(), (Shape{b.labels.size(), 3, 4, 4}));
        ids.insert(ids.end(), b.sample_ids.begin(), b.sample_ids.end());
        labels.insert(b.labels.begin(), b.labels.end());
    }
    EXPECT_EQ(sizes, (std::vector<std::size_t>{32, 32, 6}));
    EXPECT_EQ(ids, idx.indices(Split::train));  // shuffle=false keeps index order
    std::multiset<int> expected;
    for (std::size_t i : idx.indices(Split::train)) expected.insert(idx.samples[i].label);
    EXPECT_EQ(labels, expected);
}

TEST(Batches, ShuffleDependsOnSeedAndEpoch) {
    TempDir dir;
    make_class_tree(dir.path(), {10, 10});
    DatasetIndex idx = build_index(dir.path(), 0.2, 0);
    auto order = [&](std::uint64_t seed, std::size_t epoch) {
        BatchStream s(idx, Split::train, eval_spec(4, 4), BatchOptions{5, true, seed, epoch, true});
        std::vector<std::size_t> ids;
        Batch b;
        while (s.next(b)) ids.insert(ids.end(), b.sample_ids.begin(), b.sample_ids.end());
        return ids;
    };
    EXPECT_EQ(order(1, 0), order(1, 0));
    EXPECT_NE(order(1, 0), order(1, 1));
    auto sorted = order(1, 3);
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, idx.indices(Split::train));
}

TEST(Batches, EmptySplit) {
    TempDir dir;
    make_class_tree(dir.path(), {2, 2});
    DatasetIndex idx = build_index(dir.path(), 0.2, 0);  // floor(0.4) = 0 val samples
    expect_error(ErrorKind::EmptySplit, [&] { BatchStream(idx, Split::val, eval_spec(4, 4), BatchOptions{}); });
}

TEST(Synthetic, CountsAndDeterminism) {
    TempDir a, b;
    SyntheticSpec spec{2, 20, 64, 7};
    gen_synthetic(a.path(), spec);
    gen_synthetic(b.path(), spec);
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a.path())) {
        if (!e.is_regular_file()) continue;
        ++files;
        const fs::path other = b.path() / fs::relative(e.path(), a.path());
        std::ifstream fa(e.path(), std::ios::binary), fb(other, std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
        EXPECT_EQ(sa, sb) << e.path();
    }
    EXPECT_EQ(files, 40u);
    DatasetIndex idx = build_index(a.path());
    EXPECT_EQ(idx.classes.size(), 2u);
    EXPECT_EQ(idx.samples.size(), 40u);
}

TEST(Synthetic, MeanColorLinearlySeparable) {
    SyntheticSpec spec{2, 200, 64, 11};
    // Nearest-centroid on mean RGB (a linear rule) fit on even, scored on odd.
    std::array<std::array<double, 3>, 2> centroid{};
    for (std::size_t k = 0; k < 2; ++k) {
        for (std::size_t i = 0; i < spec.per_class; i += 2) {
            auto m = mean_rgb(synthetic_image(spec, k, i));
            for (int c = 0; c < 3; ++c) centroid[k][c] += m[c] / (spec.per_class / 2);
        }
    }
    std::size_t correct = 0, total = 0;
    for (std::size_t k = 0; k < 2; ++k) {
        for (std::size_t i = 1; i < spec.per_class; i += 2) {
            auto m = mean_rgb(synthetic_image(spec, k, i));
            double d[2] = {0, 0};
            for (int j = 0; j < 2; ++j)
                for (int c = 0; c < 3; ++c) d[j] += std::pow(m[c] - centroid[j][c], 2);
            correct += (d[0] < d[1] ? 0u : 1u) == k;
            ++total;
        }
    }
    EXPECT_GE(double(correct) / total, 0.95);
}

TEST(Synthetic, ManyClassesStayDistinct) {
    SyntheticSpec spec{35, 2, 16, 1};
    std::set<std::array<int, 3>> seen;
    for (std::size_t k = 0; k < 35; ++k) {
        auto m = mean_rgb(synthetic_image(spec, k, 0));
        seen.insert({int(m[0] * 50), int(m[1] * 50), int(m[2] * 50)});
    }
    EXPECT_GE(seen.size(), 30u);
}
