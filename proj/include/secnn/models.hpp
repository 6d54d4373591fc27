#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "secnn/nn.hpp"

namespace secnn {

enum class Architecture { custom_cnn, resnet50, vgg16 };

std::string_view to_string(Architecture arch) noexcept;
std::optional<Architecture> parse_architecture(std::string_view name) noexcept;

struct CustomCnnConfig {
    std::size_t base_channels = 32;
    std::size_t num_classes = 2;
    double head_dropout = 0.5;
    double block_dropout = 0.1;
    std::size_t se_reduction = 16;
};

// A built network plus its named parameters and buffers. Freshly built
// graphs are structural: parameters carry shapes but no storage until
// kaiming_init() (or materialize()) allocates them.
class ModelGraph {
public:
    ModelGraph(Architecture arch, std::unique_ptr<nn::Sequential> root, std::size_t num_classes,
               std::size_t base_channels);
    ModelGraph(ModelGraph&&) noexcept = default;
    ModelGraph& operator=(ModelGraph&&) noexcept = default;

    Architecture architecture() const noexcept { return arch_; }
    std::size_t num_classes() const noexcept { return num_classes_; }
    std::size_t base_channels() const noexcept { return base_channels_; }
    bool transfer_frozen() const noexcept { return transfer_frozen_; }
    // Smallest accepted input height/width.
    std::size_t min_spatial() const noexcept;

    nn::Sequential& root() { return *root_; }

    const std::vector<Parameter*>& parameters() const noexcept { return params_; }
    const std::vector<Buffer*>& buffers() const noexcept { return buffers_; }
    Parameter& parameter(std::string_view name) const;
    Parameter* find_parameter(std::string_view name) const;
    Buffer* find_buffer(std::string_view name) const;

    bool materialized() const;
    // Allocates zero-filled parameters and default buffers.
    void materialize(DType dtype = DType::f32);
    // Converts all parameters and buffers (materializing first if needed).
    void convert(DType dtype);
    DType dtype() const;

    // input [N,3,H,W] -> logits [N,num_classes], recorded on tape.
    Var forward(Tape& tape, const Tensor& input, Mode mode, std::mt19937_64& rng);
    // Eval-mode logits without keeping a tape around.
    Tensor logits(const Tensor& input);

    std::vector<nn::SummaryRow> summary(const Shape& input) const;

    void zero_grad();

    // Re-collects parameter and buffer lists after the tree changes.
    void refresh();
    void set_transfer_frozen(bool frozen) noexcept { transfer_frozen_ = frozen; }

private:
    void check_input(const Shape& s) const;

    Architecture arch_;
    std::unique_ptr<nn::Sequential> root_;
    std::size_t num_classes_;
    std::size_t base_channels_;
    bool transfer_frozen_ = false;
    std::vector<Parameter*> params_;
    std::vector<Buffer*> buffers_;
};

// stem: conv3x3(3->C) + BN + ReLU; stages of ResidualSEBlocks with widths
// C, 2C, 4C, 4C and strides 1, 2, 2, 2; global average pool; head
// dropout -> Linear(4C, 128) -> ReLU -> Linear(128, classes).
ModelGraph build_custom_cnn(const CustomCnnConfig& config);
// Bottleneck 3-4-6-3 ResNet-50 with the classifier sized to num_classes.
ModelGraph build_resnet50(std::size_t num_classes);
// VGG-16 (13 conv + 3 FC) with the last layer sized to num_classes.
ModelGraph build_vgg16(std::size_t num_classes);

// Sets the classifier-head dropout rate: CustomCNN's head dropout, a dropout
// inserted before ResNet-50's fc (created on first use), or every VGG-16
// classifier dropout.
void set_head_dropout(ModelGraph& model, double head_dropout);

// Freezes everything except the final linear layer. ResNet-50 gets a
// dropout(head_dropout) inserted before its classifier; VGG-16's classifier
// dropouts are set to head_dropout. Throws UnsupportedModel for CustomCNN.
void freeze_for_transfer(ModelGraph& model, double head_dropout);

// Conv/linear weights ~ N(0, 2/fan_in); biases 0; BN scale 1, shift 0;
// running stats reset. Materializes the graph in f32 if needed.
void kaiming_init(ModelGraph& model, std::uint64_t seed);

struct ParamCount {
    std::size_t total = 0;
    std::size_t trainable = 0;
};

ParamCount param_count(const ModelGraph& model);
// 4 bytes per parameter in MiB, rounded to 2 decimals.
double size_mb(const ModelGraph& model);
double size_mb(std::size_t total_params);

// Plain-text per-layer table plus totals.
std::string format_summary(const ModelGraph& model, const Shape& input);

}  // namespace secnn
