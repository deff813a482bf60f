#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecg/labels.hpp"

namespace ecg::evaluation {

inline constexpr double kDefaultThreshold = 0.5;

/// 1 where probability >= threshold.
LabelMatrix binarize(const ScoreMatrix& probabilities, double threshold = kDefaultThreshold);

struct ClassConfusion {
    std::size_t tn = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tp = 0;

    std::size_t total() const noexcept { return tn + fp + fn + tp; }
    bool operator==(const ClassConfusion&) const = default;
};

/// Per-class 2x2 counts. Counts are additive, so partial results over
/// disjoint batches can be merged with operator+=.
struct ConfusionCounts {
    std::array<ClassConfusion, kNumClasses> classes{};

    std::size_t samples() const noexcept { return classes[0].total(); }
    ConfusionCounts& operator+=(const ConfusionCounts& other);
    bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts confusion(const LabelMatrix& pred, const LabelMatrix& truth);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

using PerClassMetrics = std::array<ClassMetrics, kNumClasses>;

/// Zero denominators give 0 for precision, recall and F1.
PerClassMetrics per_class_metrics(const ConfusionCounts& counts);

struct AggregateMetrics {
    double micro_precision = 0.0;
    double micro_recall = 0.0;
    double micro_f1 = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double weighted_precision = 0.0;
    double weighted_recall = 0.0;
    double weighted_f1 = 0.0;
    double hamming_loss = 0.0;
    double binary_accuracy = 1.0;
};

AggregateMetrics aggregate_metrics(const ConfusionCounts& counts, const PerClassMetrics& per_class);

/// Fraction of rows whose whole label vector is predicted exactly.
double subset_accuracy(const LabelMatrix& pred, const LabelMatrix& truth);

/// Area under the ROC curve for one class by trapezoidal integration over
/// tie groups. Empty when the class has no positives or no negatives.
std::optional<double> roc_auc_single(std::span<const double> scores, std::span<const std::uint8_t> truth);

struct AucResult {
    std::array<std::optional<double>, kNumClasses> per_class{};
    std::optional<double> macro;           // mean over classes with a defined AUC
    std::vector<DiagClass> undefined;      // classes lacking positives or negatives
};

AucResult roc_auc(const ScoreMatrix& scores, const LabelMatrix& truth);

struct EvaluationReport {
    double threshold = kDefaultThreshold;
    std::size_t samples = 0;
    ConfusionCounts confusion;
    PerClassMetrics per_class{};
    AggregateMetrics aggregate;
    double subset_accuracy = 0.0;
    AucResult auc;
    std::optional<double> loss;  // unweighted binary cross-entropy, when known
};

EvaluationReport evaluate(const ScoreMatrix& probabilities, const LabelMatrix& truth,
                          double threshold = kDefaultThreshold);

/// Report assembled from confusion counts alone (no scores, so no AUC and
/// no subset accuracy).
EvaluationReport report_from_counts(const ConfusionCounts& counts, double threshold = kDefaultThreshold);

std::string report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const std::string& text);

/// `class,tn,fp,fn,tp`
std::string confusion_to_csv(const ConfusionCounts& counts);
/// `class,precision,recall,f1,support`
std::string per_class_to_csv(const PerClassMetrics& metrics);

}  // namespace ecg::evaluation
