#include "secnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "secnn/optim.hpp"

namespace secnn {

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0}); }

std::size_t ConfusionMatrix::trace() const {
    std::size_t t = 0;
    for (std::size_t i = 0; i < k_; ++i) t += at(i, i);
    return t;
}

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const {
    std::size_t s = 0;
    for (std::size_t j = 0; j < k_; ++j) s += at(truth, j);
    return s;
}

std::size_t ConfusionMatrix::col_sum(std::size_t pred) const {
    std::size_t s = 0;
    for (std::size_t i = 0; i < k_; ++i) s += at(i, pred);
    return s;
}

ClassificationReport classification_report(const std::vector<int>& truth, const std::vector<int>& pred,
                                           std::size_t num_classes) {
    if (truth.empty()) fail(ErrorKind::EmptyInput, "classification_report on no samples");
    if (truth.size() != pred.size())
        fail(ErrorKind::ShapeMismatch, std::to_string(truth.size()) + " labels vs " + std::to_string(pred.size()) +
                                           " predictions");
    if (num_classes == 0) fail(ErrorKind::NoClasses, "num_classes must be positive");
    const int k = static_cast<int>(num_classes);
    ClassificationReport r;
    r.confusion = ConfusionMatrix(num_classes);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= k || pred[i] < 0 || pred[i] >= k)
            fail(ErrorKind::LabelOutOfRange, "label outside [0," + std::to_string(k) + ") at sample " + std::to_string(i));
        r.confusion.add(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(pred[i]));
    }
    const double n = static_cast<double>(truth.size());
    double wp = 0.0, wf = 0.0, tp_sum = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        const std::size_t tp = r.confusion.at(c, c);
        const std::size_t predicted = r.confusion.col_sum(c), support = r.confusion.row_sum(c);
        ClassMetrics m;
        m.support = support;
        if (predicted > 0) {
            m.precision = static_cast<double>(tp) / static_cast<double>(predicted);
        } else {
            r.warnings.push_back("precision of class " + std::to_string(c) + " is ill-defined (no predictions); set to 0");
        }
        if (support > 0) {
            m.recall = static_cast<double>(tp) / static_cast<double>(support);
        } else {
            r.warnings.push_back("recall of class " + std::to_string(c) + " is ill-defined (no samples); set to 0");
        }
        if (m.precision + m.recall > 0.0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
        const double w = static_cast<double>(support);
        wp += w * m.precision;
        wf += w * m.f1;
        // support * (tp / support) is tp exactly; summing tp keeps weighted
        // recall free of rounding.
        tp_sum += static_cast<double>(tp);
        r.per_class.push_back(m);
    }
    r.accuracy = static_cast<double>(r.confusion.trace()) / n;
    r.weighted_precision = wp / n;
    r.weighted_recall = tp_sum / n;
    r.weighted_f1 = wf / n;
    return r;
}

namespace {

void check_binary(const std::vector<double>& scores, const std::vector<int>& labels, std::size_t& pos,
                  std::size_t& neg) {
    if (scores.size() != labels.size())
        fail(ErrorKind::ShapeMismatch, std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) +
                                           " labels");
    if (scores.empty()) fail(ErrorKind::EmptyInput, "no scores");
    pos = neg = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) fail(ErrorKind::LabelOutOfRange, "binary labels must be 0 or 1");
        (y == 1 ? pos : neg)++;
    }
}

// Indices sorted by descending score (stable, so input order breaks ties).
std::vector<std::size_t> by_score_desc(const std::vector<double>& scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

// Visits (threshold, tp, fp) after each group of equal scores.
template <class F>
void sweep(const std::vector<double>& scores, const std::vector<int>& labels, F&& f) {
    const auto order = by_score_desc(scores);
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double t = scores[order[i]];
        for (; i < order.size() && scores[order[i]] == t; ++i) (labels[order[i]] == 1 ? tp : fp)++;
        f(t, tp, fp);
    }
}

}  // namespace

RocCurve roc_curve_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::size_t pos = 0, neg = 0;
    check_binary(scores, labels, pos, neg);
    if (pos == 0 || neg == 0) fail(ErrorKind::SingleClassInput, "ROC needs both classes present");
    RocCurve c;
    c.fpr.push_back(0.0);
    c.tpr.push_back(0.0);
    c.thresholds.push_back(std::numeric_limits<double>::infinity());
    sweep(scores, labels, [&](double t, std::size_t tp, std::size_t fp) {
        c.fpr.push_back(static_cast<double>(fp) / static_cast<double>(neg));
        c.tpr.push_back(static_cast<double>(tp) / static_cast<double>(pos));
        c.thresholds.push_back(t);
    });
    for (std::size_t i = 1; i < c.fpr.size(); ++i) c.auc += (c.fpr[i] - c.fpr[i - 1]) * (c.tpr[i] + c.tpr[i - 1]) / 2;
    return c;
}

PrCurve pr_curve_ap(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::size_t pos = 0, neg = 0;
    check_binary(scores, labels, pos, neg);
    if (pos == 0) fail(ErrorKind::NoPositives, "average precision needs at least one positive");
    PrCurve c;
    double prev_recall = 0.0;
    sweep(scores, labels, [&](double t, std::size_t tp, std::size_t fp) {
        const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
        const double r = static_cast<double>(tp) / static_cast<double>(pos);
        c.precision.push_back(p);
        c.recall.push_back(r);
        c.thresholds.push_back(t);
        c.average_precision += (r - prev_recall) * p;
        prev_recall = r;
    });
    return c;
}

std::vector<int> argmax_rows(const Tensor& scores) {
    if (scores.rank() != 2) fail(ErrorKind::ShapeMismatch, "argmax_rows expects [N,K], got " + shape_str(scores.shape()));
    const std::size_t n = scores.shape()[0], k = scores.shape()[1];
    const auto v = scores.to_vector();
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (v[i * k + j] > v[i * k + best]) best = j;
        out[i] = static_cast<int>(best);
    }
    return out;
}

Predictions predictions_from_logits(const Tensor& logits, std::vector<int> labels) {
    Predictions p;
    p.probabilities = softmax(logits);
    p.predicted = argmax_rows(logits);
    p.labels = std::move(labels);
    return p;
}

Predictions predict(ModelGraph& model, const DatasetIndex& index, Split split, const AugmentSpec& spec,
                    std::size_t batch_size) {
    BatchOptions opts;
    opts.batch_size = batch_size;
    opts.shuffle = false;
    BatchStream stream(index, split, spec, opts);
    const std::size_t k = model.num_classes();
    std::vector<double> logits;
    std::vector<int> labels;
    Batch b;
    while (stream.next(b)) {
        const auto v = model.logits(b.images).to_vector();
        logits.insert(logits.end(), v.begin(), v.end());
        labels.insert(labels.end(), b.labels.begin(), b.labels.end());
    }
    const std::size_t n = labels.size();
    return predictions_from_logits(Tensor::from_values({n, k}, logits, model.dtype()), std::move(labels));
}

ClassificationReport evaluate_predictions(const Predictions& p, std::size_t num_classes) {
    ClassificationReport r = classification_report(p.labels, p.predicted, num_classes);
    if (num_classes == 2) {
        const auto probs = p.probabilities.to_vector();
        std::vector<double> pos(p.labels.size());
        for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = probs[i * 2 + 1];
        std::size_t positives = std::count(p.labels.begin(), p.labels.end(), 1);
        if (positives > 0 && positives < p.labels.size()) r.roc = roc_curve_auc(pos, p.labels);
        if (positives > 0) r.pr = pr_curve_ap(pos, p.labels);
        if (!r.roc) r.warnings.push_back("ROC-AUC undefined: only one class present");
    }
    return r;
}

std::string report_to_json(const ClassificationReport& r, const std::vector<std::string>& class_names) {
    nlohmann::ordered_json j;
    j["accuracy"] = r.accuracy;
    j["weighted_precision"] = r.weighted_precision;
    j["weighted_recall"] = r.weighted_recall;
    j["weighted_f1"] = r.weighted_f1;
    auto& per = j["per_class"] = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& m = r.per_class[c];
        per.push_back({{"class", c < class_names.size() ? class_names[c] : std::to_string(c)},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"support", m.support}});
    }
    auto& cm = j["confusion_matrix"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < r.confusion.classes(); ++i) {
        auto row = nlohmann::ordered_json::array();
        for (std::size_t k = 0; k < r.confusion.classes(); ++k) row.push_back(r.confusion.at(i, k));
        cm.push_back(row);
    }
    if (r.roc) j["roc_auc"] = r.roc->auc;
    if (r.pr) j["average_precision"] = r.pr->average_precision;
    j["warnings"] = r.warnings;
    return j.dump(2);
}

std::string format_report(const ClassificationReport& r, const std::vector<std::string>& class_names) {
    std::size_t name_w = 5;
    for (const auto& n : class_names) name_w = std::max(name_w, n.size());
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << std::left << std::setw(name_w + 2) << "class" << std::right << std::setw(10) << "precision" << std::setw(10)
       << "recall" << std::setw(10) << "f1" << std::setw(10) << "support" << '\n';
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& m = r.per_class[c];
        os << std::left << std::setw(name_w + 2) << (c < class_names.size() ? class_names[c] : std::to_string(c))
           << std::right << std::setw(10) << m.precision << std::setw(10) << m.recall << std::setw(10) << m.f1
           << std::setw(10) << m.support << '\n';
    }
    os << std::left << std::setw(name_w + 2) << "weighted" << std::right << std::setw(10) << r.weighted_precision
       << std::setw(10) << r.weighted_recall << std::setw(10) << r.weighted_f1 << std::setw(10) << r.confusion.total()
       << '\n';
    os << "accuracy: " << r.accuracy << '\n';
    if (r.roc) os << "roc_auc: " << r.roc->auc << '\n';
    if (r.pr) os << "average_precision: " << r.pr->average_precision << '\n';
    os << "confusion matrix (rows = true, cols = predicted):\n";
    for (std::size_t i = 0; i < r.confusion.classes(); ++i) {
        for (std::size_t k = 0; k < r.confusion.classes(); ++k) os << std::setw(8) << r.confusion.at(i, k);
        os << '\n';
    }
    for (const auto& w : r.warnings) os << "warning: " << w << '\n';
    return os.str();
}

void write_curve_csv(const std::filesystem::path& path, const std::string& x_name, const std::vector<double>& x,
                     const std::string& y_name, const std::vector<double>& y) {
    if (x.size() != y.size()) fail(ErrorKind::ShapeMismatch, "curve columns differ in length");
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::IoFailure, "cannot write " + path.string());
    out << x_name << ',' << y_name << '\n' << std::fixed << std::setprecision(6);
    for (std::size_t i = 0; i < x.size(); ++i) out << x[i] << ',' << y[i] << '\n';
    if (!out) fail(ErrorKind::IoFailure, "write failed for " + path.string());
}

}  // namespace secnn
