#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "secnn/autograd.hpp"

namespace secnn {

// 8-bit RGB, row-major HWC.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> rgb;
};

// Binary PPM (P6, maxval 255). Comments in the header are accepted.
Image decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");
Image read_ppm(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_ppm(const Image& image);
void write_ppm(const std::filesystem::path& path, const Image& image);

// ---- float image ops on [3,H,W] tensors --------------------------------------

// [3,H,W] f32 with values in [0,1].
Tensor to_tensor(const Image& image);
// Bilinear, half-pixel centers (align_corners = false), edge clamped.
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);
Tensor hflip(const Tensor& image);
// Counter-clockwise rotation about the image center; bilinear sampling,
// exposed area filled with 0.
Tensor rotate(const Tensor& image, double degrees);
// Brightness, contrast and saturation factors applied in that order; each
// result is clamped to [0,1].
Tensor adjust_brightness(const Tensor& image, double factor);
Tensor adjust_contrast(const Tensor& image, double factor);
Tensor adjust_saturation(const Tensor& image, double factor);

constexpr std::array<double, 3> kImageNetMean{0.485, 0.456, 0.406};
constexpr std::array<double, 3> kImageNetStd{0.229, 0.224, 0.225};

Tensor normalize(const Tensor& image, const std::array<double, 3>& mean, const std::array<double, 3>& std);
Tensor denormalize(const Tensor& image, const std::array<double, 3>& mean, const std::array<double, 3>& std);

struct AugmentSpec {
    std::size_t height = 64;
    std::size_t width = 64;
    double hflip_prob = 0.5;
    double rotation_degrees = 15.0;
    // Factors are drawn uniformly from [1 - j, 1 + j].
    double brightness = 0.2;
    double contrast = 0.2;
    double saturation = 0.2;
    std::array<double, 3> mean = kImageNetMean;
    std::array<double, 3> std = kImageNetStd;

    // Throws InvalidConfig.
    void validate() const;
};

// decode -> resize -> (train: hflip, rotate, jitter) -> normalize.
// Eval mode draws nothing from rng.
Tensor load_and_transform(const std::filesystem::path& path, const AugmentSpec& spec, Mode mode,
                          std::mt19937_64& rng);
Tensor transform(const Image& image, const AugmentSpec& spec, Mode mode, std::mt19937_64& rng);

// ---- dataset index ------------------------------------------------------------

enum class Split { train, val };

struct Sample {
    std::filesystem::path path;
    int label = 0;
    Split split = Split::train;
};

struct DatasetIndex {
    std::filesystem::path root;
    std::vector<std::string> classes;
    std::vector<Sample> samples;
    double val_fraction = 0.2;
    std::uint64_t seed = 0;

    std::size_t num_classes() const noexcept { return classes.size(); }
    std::vector<std::size_t> indices(Split split) const;
    std::size_t count(Split split) const;
};

// Class = sorted subdirectory names; files within a class sorted by name,
// shuffled with a per-class seeded permutation, and the first
// floor(val_fraction * n) go to validation. Every file must decode.
DatasetIndex build_index(const std::filesystem::path& root, double val_fraction = 0.2, std::uint64_t seed = 0);

// Number of validation samples out of n for a stratified cut.
std::size_t stratified_val_count(std::size_t n, double val_fraction);

// Split tags for one class of n samples (in file order): a seeded
// permutation whose first stratified_val_count(n) entries go to validation.
std::vector<Split> assign_class_splits(std::size_t n, double val_fraction, std::uint64_t seed);

// Deterministic seed derivation (splitmix64 over the pair).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// Portable Fisher-Yates shuffle driven by raw mt19937_64 output.
void shuffle_indices(std::vector<std::size_t>& v, std::uint64_t seed);

// ---- batching -------------------------------------------------------------------

struct Batch {
    Tensor images;            // [B,3,H,W] f32
    std::vector<int> labels;  // B
    std::vector<std::size_t> sample_ids;
};

struct BatchOptions {
    std::size_t batch_size = 32;
    bool shuffle = true;
    std::uint64_t seed = 0;
    std::size_t epoch = 0;
    // Train-mode augmentation; off gives the clean eval pipeline.
    bool augment = false;
};

// One pass over a split. Order and augmentation are a pure function of
// (seed, epoch); the last batch may be short.
class BatchStream {
public:
    BatchStream(const DatasetIndex& index, Split split, const AugmentSpec& spec, BatchOptions options);

    bool next(Batch& out);
    std::size_t num_batches() const noexcept;
    std::size_t size() const noexcept { return order_.size(); }

private:
    const DatasetIndex& index_;
    AugmentSpec spec_;
    BatchOptions options_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
    std::mt19937_64 rng_;
};

// ---- synthetic data ------------------------------------------------------------

struct SyntheticSpec {
    std::size_t num_classes = 2;
    std::size_t per_class = 20;
    std::size_t image_size = 64;
    std::uint64_t seed = 0;
};

// Writes root/class_<k>/img_<i>.ppm. Each class has its own base color and
// stripe orientation; per-image noise keeps samples distinct. Byte-identical
// for a given spec.
void gen_synthetic(const std::filesystem::path& root, const SyntheticSpec& spec);
Image synthetic_image(const SyntheticSpec& spec, std::size_t cls, std::size_t i);

// Per-channel mean of an image in [0,1].
std::array<double, 3> mean_rgb(const Image& image);

}  // namespace secnn
