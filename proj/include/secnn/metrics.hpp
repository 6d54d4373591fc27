#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "secnn/data.hpp"
#include "secnn/models.hpp"

namespace secnn {

// Rows = true class, columns = predicted class.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t k = 0) : k_(k), counts_(k * k, 0) {}
    std::size_t classes() const noexcept { return k_; }
    std::size_t at(std::size_t truth, std::size_t pred) const { return counts_.at(truth * k_ + pred); }
    void add(std::size_t truth, std::size_t pred) { ++counts_.at(truth * k_ + pred); }
    std::size_t total() const;
    std::size_t trace() const;
    std::size_t row_sum(std::size_t truth) const;
    std::size_t col_sum(std::size_t pred) const;

private:
    std::size_t k_;
    std::vector<std::size_t> counts_;
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct RocCurve {
    std::vector<double> fpr, tpr, thresholds;
    double auc = 0.0;
};

struct PrCurve {
    std::vector<double> precision, recall, thresholds;
    double average_precision = 0.0;
};

struct ClassificationReport {
    double accuracy = 0.0;
    double weighted_precision = 0.0;
    double weighted_recall = 0.0;
    double weighted_f1 = 0.0;
    std::vector<ClassMetrics> per_class;
    ConfusionMatrix confusion;
    std::optional<RocCurve> roc;
    std::optional<PrCurve> pr;
    // Zero-denominator cases that were reported as 0.
    std::vector<std::string> warnings;
};

// Throws EmptyInput, LabelOutOfRange, ShapeMismatch (length mismatch).
ClassificationReport classification_report(const std::vector<int>& truth, const std::vector<int>& pred,
                                           std::size_t num_classes);

// scores: positive-class probabilities; labels in {0,1}. Points sweep the
// distinct scores from high to low, starting at (0,0); AUC by trapezoid.
// Throws SingleClassInput.
RocCurve roc_curve_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Precision/recall at each distinct threshold (descending);
// AP = sum (R_i - R_{i-1}) * P_i with R_0 = 0. Throws NoPositives.
PrCurve pr_curve_ap(const std::vector<double>& scores, const std::vector<int>& labels);

struct Predictions {
    std::vector<int> labels;
    std::vector<int> predicted;
    Tensor probabilities;  // [N,K] f32 or f64 (follows the logits)
};

// argmax with the lowest index winning ties.
std::vector<int> argmax_rows(const Tensor& scores);
Predictions predictions_from_logits(const Tensor& logits, std::vector<int> labels);

// Eval-mode pass over a split (clean pipeline, index order).
Predictions predict(ModelGraph& model, const DatasetIndex& index, Split split, const AugmentSpec& spec,
                    std::size_t batch_size = 32);

// Report plus ROC/PR for binary tasks.
ClassificationReport evaluate_predictions(const Predictions& p, std::size_t num_classes);

std::string report_to_json(const ClassificationReport& report, const std::vector<std::string>& class_names);
std::string format_report(const ClassificationReport& report, const std::vector<std::string>& class_names);
// Two-column CSV with a header line.
void write_curve_csv(const std::filesystem::path& path, const std::string& x_name, const std::vector<double>& x,
                     const std::string& y_name, const std::vector<double>& y);

}  // namespace secnn
