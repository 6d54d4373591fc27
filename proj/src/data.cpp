#include "secnn/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

namespace secnn {

namespace fs = std::filesystem;

// ---- PPM -------------------------------------------------------------------------

namespace {

[[noreturn]] void undecodable(const std::string& origin, const std::string& why) {
    fail(ErrorKind::UndecodableImage, origin + ": " + why);
}

struct HeaderReader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;
    const std::string& origin;

    void skip_space_and_comments() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    }

    std::size_t number() {
        skip_space_and_comments();
        std::size_t v = 0, digits = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (++digits > 9) undecodable(origin, "header value too large");
            ++pos;
        }
        if (digits == 0) undecodable(origin, "malformed PPM header");
        return v;
    }
};

}  // namespace

Image decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') undecodable(origin, "not a binary PPM (P6)");
    HeaderReader r{bytes, 2, origin};
    Image img;
    img.width = r.number();
    img.height = r.number();
    const std::size_t maxval = r.number();
    if (img.width == 0 || img.height == 0) undecodable(origin, "zero image extent");
    if (maxval != 255) undecodable(origin, "only 8-bit PPM (maxval 255) is supported");
    if (r.pos >= bytes.size() || !std::isspace(bytes[r.pos])) undecodable(origin, "malformed PPM header");
    ++r.pos;
    const std::size_t need = img.width * img.height * 3;
    if (bytes.size() - r.pos < need) undecodable(origin, "truncated pixel data");
    img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(r.pos),
                   bytes.begin() + static_cast<std::ptrdiff_t>(r.pos + need));
    return img;
}

Image read_ppm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) undecodable(path.string(), "cannot open");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_ppm(bytes, path.string());
}

std::vector<std::uint8_t> encode_ppm(const Image& image) {
    if (image.rgb.size() != image.width * image.height * 3)
        fail(ErrorKind::ShapeMismatch, "image buffer does not match its extents");
    const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.rgb.begin(), image.rgb.end());
    return out;
}

void write_ppm(const fs::path& path, const Image& image) {
    const auto bytes = encode_ppm(image);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::IoFailure, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::IoFailure, "write failed for " + path.string());
}

// ---- float image ops ---------------------------------------------------------------

namespace {

void require_image(const Tensor& t, const char* what) {
    if (t.rank() != 3 || t.shape()[0] != 3)
        fail(ErrorKind::ShapeMismatch, std::string(what) + " expects [3,H,W], got " + shape_str(t.shape()));
    if (t.dtype() != DType::f32) fail(ErrorKind::DtypeMismatch, std::string(what) + " expects f32");
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

// Grayscale luma used by contrast and saturation.
double luma(float r, float g, float b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

}  // namespace

Tensor to_tensor(const Image& image) {
    const std::size_t h = image.height, w = image.width;
    Tensor t({3, h, w});
    auto d = t.mutable_data<float>();
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                d[(c * h + y) * w + x] = static_cast<float>(image.rgb[(y * w + x) * 3 + c]) / 255.0f;
    return t;
}

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
    require_image(image, "resize");
    if (height == 0 || width == 0) fail(ErrorKind::InvalidConfig, "resize target must be positive");
    const std::size_t ih = image.shape()[1], iw = image.shape()[2];
    if (ih == height && iw == width) return image.clone();
    Tensor out({3, height, width});
    auto s = image.data<float>();
    auto d = out.mutable_data<float>();
    const double sy = static_cast<double>(ih) / height, sx = static_cast<double>(iw) / width;
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
        const std::size_t y0 = std::min(static_cast<std::size_t>(fy), ih - 1), y1 = std::min(y0 + 1, ih - 1);
        const double ly = fy - y0;
        for (std::size_t x = 0; x < width; ++x) {
            const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
            const std::size_t x0 = std::min(static_cast<std::size_t>(fx), iw - 1), x1 = std::min(x0 + 1, iw - 1);
            const double lx = fx - x0;
            for (std::size_t c = 0; c < 3; ++c) {
                const float* p = s.data() + c * ih * iw;
                const double top = p[y0 * iw + x0] * (1 - lx) + p[y0 * iw + x1] * lx;
                const double bot = p[y1 * iw + x0] * (1 - lx) + p[y1 * iw + x1] * lx;
                d[(c * height + y) * width + x] = static_cast<float>(top * (1 - ly) + bot * ly);
            }
        }
    }
    return out;
}

Tensor hflip(const Tensor& image) {
    require_image(image, "hflip");
    const std::size_t h = image.shape()[1], w = image.shape()[2];
    Tensor out(image.shape());
    auto s = image.data<float>();
    auto d = out.mutable_data<float>();
    for (std::size_t row = 0; row < 3 * h; ++row)
        for (std::size_t x = 0; x < w; ++x) d[row * w + x] = s[row * w + (w - 1 - x)];
    return out;
}

Tensor rotate(const Tensor& image, double degrees) {
    require_image(image, "rotate");
    const std::size_t h = image.shape()[1], w = image.shape()[2];
    const double th = degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(th), sn = std::sin(th);
    const double cx = (static_cast<double>(w) - 1) / 2, cy = (static_cast<double>(h) - 1) / 2;
    Tensor out(image.shape());
    auto s = image.data<float>();
    auto d = out.mutable_data<float>();
    auto px = [&](std::size_t c, long y, long x) -> double {
        if (y < 0 || x < 0 || y >= static_cast<long>(h) || x >= static_cast<long>(w)) return 0.0;
        return s[(c * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(x)];
    };
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            // Inverse map from output pixel to source location (y points down).
            const double dx = x - cx, dy = y - cy;
            const double sx = cs * dx - sn * dy + cx;
            const double sy = sn * dx + cs * dy + cy;
            const double fx = std::floor(sx), fy = std::floor(sy);
            const double lx = sx - fx, ly = sy - fy;
            const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = (px(c, y0, x0) * (1 - lx) + px(c, y0, x0 + 1) * lx) * (1 - ly) +
                                 (px(c, y0 + 1, x0) * (1 - lx) + px(c, y0 + 1, x0 + 1) * lx) * ly;
                d[(c * h + y) * w + x] = static_cast<float>(v);
            }
        }
    }
    return out;
}

Tensor adjust_brightness(const Tensor& image, double factor) {
    require_image(image, "brightness");
    Tensor out(image.shape());
    auto s = image.data<float>();
    auto d = out.mutable_data<float>();
    for (std::size_t i = 0; i < s.size(); ++i) d[i] = clamp01(s[i] * factor);
    return out;
}

Tensor adjust_contrast(const Tensor& image, double factor) {
    require_image(image, "contrast");
    const std::size_t hw = image.shape()[1] * image.shape()[2];
    auto s = image.data<float>();
    double mean = 0.0;
    for (std::size_t i = 0; i < hw; ++i) mean += luma(s[i], s[hw + i], s[2 * hw + i]);
    mean /= static_cast<double>(hw);
    Tensor out(image.shape());
    auto d = out.mutable_data<float>();
    for (std::size_t i = 0; i < s.size(); ++i) d[i] = clamp01(factor * s[i] + (1 - factor) * mean);
    return out;
}

Tensor adjust_saturation(const Tensor& image, double factor) {
    require_image(image, "saturation");
    const std::size_t hw = image.shape()[1] * image.shape()[2];
    auto s = image.data<float>();
    Tensor out(image.shape());
    auto d = out.mutable_data<float>();
    for (std::size_t i = 0; i < hw; ++i) {
        const double g = luma(s[i], s[hw + i], s[2 * hw + i]);
        for (std::size_t c = 0; c < 3; ++c) d[c * hw + i] = clamp01(factor * s[c * hw + i] + (1 - factor) * g);
    }
    return out;
}

Tensor normalize(const Tensor& image, const std::array<double, 3>& mean, const std::array<double, 3>& std) {
    require_image(image, "normalize");
    const std::size_t hw = image.shape()[1] * image.shape()[2];
    Tensor out(image.shape());
    auto s = image.data<float>();
    auto d = out.mutable_data<float>();
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < hw; ++i)
            d[c * hw + i] = static_cast<float>((s[c * hw + i] - mean[c]) / std[c]);
    return out;
}

Tensor denormalize(const Tensor& image, const std::array<double, 3>& mean, const std::array<double, 3>& std) {
    require_image(image, "denormalize");
    const std::size_t hw = image.shape()[1] * image.shape()[2];
    Tensor out(image.shape());
    auto s = image.data<float>();
    auto d = out.mutable_data<float>();
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < hw; ++i) d[c * hw + i] = static_cast<float>(s[c * hw + i] * std[c] + mean[c]);
    return out;
}

void AugmentSpec::validate() const {
    if (height == 0 || width == 0) fail(ErrorKind::InvalidConfig, "resolution must be positive");
    if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0)) fail(ErrorKind::InvalidConfig, "hflip_prob must lie in [0,1]");
    if (!(rotation_degrees >= 0.0)) fail(ErrorKind::InvalidConfig, "rotation_degrees must be nonnegative");
    for (double j : {brightness, contrast, saturation})
        if (!(j >= 0.0 && j <= 1.0)) fail(ErrorKind::InvalidConfig, "jitter strengths must lie in [0,1]");
    for (double s : std)
        if (!(s > 0.0)) fail(ErrorKind::InvalidConfig, "normalization std must be positive");
}

Tensor transform(const Image& image, const AugmentSpec& spec, Mode mode, std::mt19937_64& rng) {
    Tensor t = resize_bilinear(to_tensor(image), spec.height, spec.width);
    if (mode == Mode::train) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        if (u(rng) < spec.hflip_prob) t = hflip(t);
        if (spec.rotation_degrees > 0.0) t = rotate(t, (2 * u(rng) - 1) * spec.rotation_degrees);
        auto factor = [&](double j) { return 1.0 + (2 * u(rng) - 1) * j; };
        if (spec.brightness > 0.0) t = adjust_brightness(t, factor(spec.brightness));
        if (spec.contrast > 0.0) t = adjust_contrast(t, factor(spec.contrast));
        if (spec.saturation > 0.0) t = adjust_saturation(t, factor(spec.saturation));
    }
    return normalize(t, spec.mean, spec.std);
}

Tensor load_and_transform(const fs::path& path, const AugmentSpec& spec, Mode mode, std::mt19937_64& rng) {
    return transform(read_ppm(path), spec, mode, rng);
}

// ---- index --------------------------------------------------------------------------

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void shuffle_indices(std::vector<std::size_t>& v, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

std::size_t stratified_val_count(std::size_t n, double val_fraction) {
    return static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n) + 1e-9));
}

std::vector<Split> assign_class_splits(std::size_t n, double val_fraction, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    shuffle_indices(order, seed);
    std::vector<Split> out(n, Split::train);
    const std::size_t n_val = stratified_val_count(n, val_fraction);
    for (std::size_t i = 0; i < n_val; ++i) out[order[i]] = Split::val;
    return out;
}

std::vector<std::size_t> DatasetIndex::indices(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].split == split) out.push_back(i);
    return out;
}

std::size_t DatasetIndex::count(Split split) const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [&](const Sample& s) { return s.split == split; }));
}

namespace {

bool hidden(const fs::path& p) { return !p.filename().empty() && p.filename().string().front() == '.'; }

}  // namespace

DatasetIndex build_index(const fs::path& root, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
        fail(ErrorKind::InvalidConfig, "val_fraction must lie in [0,1)");
    std::error_code ec;
    if (!fs::is_directory(root, ec)) fail(ErrorKind::NoClasses, "data root " + root.string() + " is not a directory");

    DatasetIndex index;
    index.root = root;
    index.val_fraction = val_fraction;
    index.seed = seed;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory() && !hidden(entry.path())) index.classes.push_back(entry.path().filename().string());
    std::sort(index.classes.begin(), index.classes.end());
    if (index.classes.size() < 2)
        fail(ErrorKind::NoClasses, "need at least 2 class directories under " + root.string() + ", found " +
                                       std::to_string(index.classes.size()));

    std::vector<std::string> bad;
    for (std::size_t k = 0; k < index.classes.size(); ++k) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(root / index.classes[k]))
            if (entry.is_regular_file() && !hidden(entry.path())) files.push_back(entry.path());
        if (files.empty()) fail(ErrorKind::EmptyClass, "class directory " + index.classes[k] + " has no images");
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            try {
                read_ppm(f);
            } catch (const Error&) {
                bad.push_back(f.string());
            }
        }
        const auto splits = assign_class_splits(files.size(), val_fraction, mix_seed(seed, k));
        for (std::size_t i = 0; i < files.size(); ++i)
            index.samples.push_back(Sample{files[i], static_cast<int>(k), splits[i]});
    }
    if (!bad.empty()) {
        std::string msg = std::to_string(bad.size()) + " undecodable image(s):";
        for (const auto& b : bad) msg += "\n  " + b;
        fail(ErrorKind::UndecodableImage, msg);
    }
    return index;
}

// ---- batching --------------------------------------------------------------------

BatchStream::BatchStream(const DatasetIndex& index, Split split, const AugmentSpec& spec, BatchOptions options)
    : index_(index), spec_(spec), options_(options), order_(index.indices(split)),
      rng_(mix_seed(mix_seed(options.seed, options.epoch), split == Split::train ? 1 : 2)) {
    spec_.validate();
    if (options_.batch_size == 0) fail(ErrorKind::InvalidConfig, "batch_size must be positive");
    if (order_.empty())
        fail(ErrorKind::EmptySplit, std::string(split == Split::train ? "train" : "val") + " split is empty");
    if (options_.shuffle) {
        std::vector<std::size_t> perm(order_.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        shuffle_indices(perm, mix_seed(options_.seed, options_.epoch));
        std::vector<std::size_t> shuffled(order_.size());
        for (std::size_t i = 0; i < perm.size(); ++i) shuffled[i] = order_[perm[i]];
        order_ = std::move(shuffled);
    }
}

std::size_t BatchStream::num_batches() const noexcept {
    return (order_.size() + options_.batch_size - 1) / options_.batch_size;
}

bool BatchStream::next(Batch& out) {
    if (pos_ >= order_.size()) return false;
    const std::size_t b = std::min(options_.batch_size, order_.size() - pos_);
    const std::size_t plane = 3 * spec_.height * spec_.width;
    out.images = Tensor({b, 3, spec_.height, spec_.width});
    out.labels.assign(b, 0);
    out.sample_ids.assign(b, 0);
    auto dst = out.images.mutable_data<float>();
    const Mode mode = options_.augment ? Mode::train : Mode::eval;
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t id = order_[pos_ + i];
        const Sample& s = index_.samples[id];
        Tensor t = load_and_transform(s.path, spec_, mode, rng_);
        auto src = t.data<float>();
        std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(i * plane));
        out.labels[i] = s.label;
        out.sample_ids[i] = id;
    }
    pos_ += b;
    return true;
}

// ---- synthetic data -------------------------------------------------------------

namespace {

// Uniform [0,1) from raw engine output; portable across standard libraries.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
    const double hh = std::fmod(h, 1.0) * 6.0;
    const int sector = static_cast<int>(hh) % 6;
    const double f = hh - std::floor(hh);
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    switch (sector) {
        case 0: return {v, t, p};
        case 1: return {q, v, p};
        case 2: return {p, v, t};
        case 3: return {p, q, v};
        case 4: return {t, p, v};
        default: return {v, p, q};
    }
}

std::string class_dir_name(std::size_t k, std::size_t num_classes) {
    const std::size_t width = std::to_string(num_classes - 1).size();
    std::string n = std::to_string(k);
    return "class_" + std::string(width - n.size(), '0') + n;
}

}  // namespace

Image synthetic_image(const SyntheticSpec& spec, std::size_t cls, std::size_t i) {
    const std::size_t sz = spec.image_size;
    std::mt19937_64 rng(mix_seed(mix_seed(spec.seed, cls), i));
    // Class signature: hue, stripe orientation and frequency.
    const double hue = static_cast<double>(cls) / static_cast<double>(spec.num_classes);
    const auto base = hsv_to_rgb(hue, 0.65, 0.75);
    const double angle = std::numbers::pi * static_cast<double>(cls) / static_cast<double>(spec.num_classes);
    const double freq = 2 * std::numbers::pi * (3.0 + static_cast<double>(cls % 3)) / static_cast<double>(sz);
    const double phase = 2 * std::numbers::pi * unit(rng);
    const double shade = 0.9 + 0.2 * unit(rng);
    const double ca = std::cos(angle), sa = std::sin(angle);

    Image img;
    img.width = img.height = sz;
    img.rgb.resize(sz * sz * 3);
    for (std::size_t y = 0; y < sz; ++y) {
        for (std::size_t x = 0; x < sz; ++x) {
            const double stripe = 0.12 * std::sin(freq * (ca * x + sa * y) + phase);
            for (std::size_t c = 0; c < 3; ++c) {
                const double noise = 0.16 * (unit(rng) - 0.5);
                const double v = std::clamp(base[c] * shade + stripe + noise, 0.0, 1.0);
                img.rgb[(y * sz + x) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        }
    }
    return img;
}

void gen_synthetic(const fs::path& root, const SyntheticSpec& spec) {
    if (spec.num_classes < 2) fail(ErrorKind::InvalidConfig, "synthetic data needs at least 2 classes");
    if (spec.per_class == 0) fail(ErrorKind::InvalidConfig, "per_class must be positive");
    if (spec.image_size == 0) fail(ErrorKind::InvalidConfig, "image_size must be positive");
    std::error_code ec;
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
        const fs::path dir = root / class_dir_name(k, spec.num_classes);
        fs::create_directories(dir, ec);
        if (ec) fail(ErrorKind::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
        const std::size_t width = std::max<std::size_t>(4, std::to_string(spec.per_class - 1).size());
        for (std::size_t i = 0; i < spec.per_class; ++i) {
            std::string n = std::to_string(i);
            write_ppm(dir / ("img_" + std::string(width - n.size(), '0') + n + ".ppm"), synthetic_image(spec, k, i));
        }
    }
}

std::array<double, 3> mean_rgb(const Image& image) {
    std::array<double, 3> m{0, 0, 0};
    const std::size_t n = image.width * image.height;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < 3; ++c) m[c] += image.rgb[i * 3 + c];
    for (auto& v : m) v /= 255.0 * static_cast<double>(n);
    return m;
}

}  // namespace secnn
