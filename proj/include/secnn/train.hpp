#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "secnn/data.hpp"
#include "secnn/metrics.hpp"
#include "secnn/models.hpp"

namespace secnn {

struct TrainConfig {
    Architecture model = Architecture::custom_cnn;
    // ResNet-50/VGG-16 only: freeze all but the final linear layer.
    bool transfer = false;
    std::size_t epochs = 20;
    std::size_t batch_size = 32;
    double lr = 1e-4;
    double head_dropout = 0.5;
    double weight_decay = 1e-4;
    double block_dropout = 0.1;
    std::size_t base_channels = 32;
    std::uint64_t seed = 0;
    // Square input side; overrides augment.height/width.
    std::size_t resolution = 64;
    bool augment_enabled = true;
    AugmentSpec augment;
    double val_fraction = 0.2;
    // Timings are kept out of curves and checkpoints so files are
    // byte-reproducible.
    bool deterministic = true;

    // Throws InvalidConfig.
    void validate() const;
    AugmentSpec effective_augment() const;
};

// Flat JSON object keyed by CLI flag names (e.g. "head-dropout").
std::string config_to_json(const TrainConfig& config);
// Unknown keys or ill-typed values throw InvalidConfig; absent keys keep
// the values already in `base`.
TrainConfig config_from_json(const std::string& json, TrainConfig base = {});

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double seconds = 0.0;
};

struct NamedTensor {
    std::string name;
    Tensor value;
};

struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    TrainConfig config;
    std::vector<std::string> class_names;
    std::size_t epoch = 0;
    double val_accuracy = 0.0;
    double val_loss = 0.0;
    double train_accuracy = 0.0;
    std::optional<double> train_seconds;  // absent in deterministic mode
    // Parameters then buffers, in model order.
    std::vector<NamedTensor> tensors;
};

// Container: magic "SECNNCKP", u32 version, u64 manifest length, manifest
// JSON, u64 tensor count, then per tensor a u32 name length, the name and a
// tensor record. Throws IoFailure / CorruptCheckpoint.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

// Model built from a config (structure, head dropout, transfer freeze) and
// Kaiming-initialized from the config seed.
ModelGraph build_model(const TrainConfig& config, std::size_t num_classes);
// Copies the model's current parameters and buffers.
std::vector<NamedTensor> snapshot(const ModelGraph& model);
// Rebuilds the model and loads the weights. Throws CorruptCheckpoint when
// names or shapes disagree with the architecture.
ModelGraph model_from_checkpoint(const Checkpoint& ckpt);
void load_weights(ModelGraph& model, const std::vector<NamedTensor>& tensors);

// Index of the first record holding the strictly best val_acc.
std::size_t best_epoch_index(const std::vector<EpochRecord>& records);

struct FitResult {
    Checkpoint best;
    std::vector<EpochRecord> records;
    double total_seconds = 0.0;
};

struct FitHooks {
    std::function<void(const EpochRecord&)> on_epoch;
    // Called after every optimizer step with the running step count.
    std::function<void(std::size_t step, const ModelGraph&)> on_step;
    // Stops after this many optimizer steps (0 = no limit).
    std::size_t max_steps = 0;
};

// Thrown by fit() when the loss turns non-finite; carries the last good
// state (kind() == DivergedLoss).
class TrainingDiverged : public Error {
public:
    TrainingDiverged(const std::string& message, FitResult partial);
    const FitResult& partial() const noexcept { return partial_; }

private:
    FitResult partial_;
};

// Per epoch: shuffled, augmented train pass, then a clean validation pass.
// The checkpoint follows the first epoch with the highest val_acc.
FitResult fit(const TrainConfig& config, const DatasetIndex& index, const FitHooks& hooks = {});
// Same loop on a caller-supplied model (already initialized).
FitResult fit(ModelGraph& model, const TrainConfig& config, const DatasetIndex& index, const FitHooks& hooks = {});

struct EvalReport {
    ClassificationReport report;
    std::vector<std::string> class_names;
    Architecture model = Architecture::custom_cnn;
    bool transfer = false;
    ParamCount params;
    double size_mb = 0.0;
    std::optional<double> train_seconds;
    std::size_t best_epoch = 0;
    double loss = 0.0;
};

// Throws ClassMismatch when the checkpoint classes differ from the index.
EvalReport evaluate(const Checkpoint& ckpt, const DatasetIndex& index, Split split);
std::string eval_report_to_json(const EvalReport& report);
std::string format_eval_report(const EvalReport& report);

// Header epoch,train_loss,train_acc,val_loss,val_acc,seconds; 6 decimals.
// With zero_seconds the timing column is written as 0.
void export_curves(const std::vector<EpochRecord>& records, const std::filesystem::path& path,
                   bool zero_seconds = false);
std::vector<EpochRecord> read_curves(const std::filesystem::path& path);

}  // namespace secnn
