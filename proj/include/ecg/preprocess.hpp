#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecg/dataset.hpp"
#include "ecg/labels.hpp"
#include "ecg/tensor.hpp"

namespace ecg::preprocess {

inline constexpr double kNormEpsilon = 1e-8;
inline constexpr double kDefaultHypMultiplier = 1.5;
inline constexpr std::size_t kDefaultBalanceTarget = 4000;

struct FoldSplit {
    std::vector<std::size_t> train;  // folds 1-9, corpus order
    std::vector<std::size_t> test;   // fold 10, corpus order
};

FoldSplit stratified_split(const dataset::Corpus& corpus);

struct BalanceSpec {
    std::array<std::optional<std::size_t>, kNumClasses> targets{};
    std::uint64_t seed = 0;

    /// HYP and NORM resampled to 4000 rows each; other classes retained.
    static BalanceSpec defaults(std::uint64_t seed = 0);
};

struct BalancedRows {
    std::vector<std::size_t> rows;               // concatenated per-class lists, canonical class order
    std::array<std::size_t, kNumClasses> contributions{};
};

/// Targeted resampling over the training rows. `labels` is indexed by the
/// values in `train_rows` (typically the whole corpus label matrix).
///
/// A class list larger than its target is sampled without replacement. A
/// smaller one keeps every member once and fills the shortfall with draws
/// made with replacement. Untargeted classes keep every member. Multi-label
/// rows appear once per class list.
BalancedRows balance(std::span<const std::size_t> train_rows, const LabelMatrix& labels, const BalanceSpec& spec);

struct NormStats {
    std::vector<double> mu;
    std::vector<double> sigma;
    double epsilon = kNormEpsilon;

    std::size_t leads() const noexcept { return mu.size(); }
    bool operator==(const NormStats&) const = default;
};

/// Per-lead mean and population standard deviation over every sample and
/// time step. A lead whose values are all equal gets sigma == 0 and a mean
/// equal to that value exactly.
NormStats fit_norm_stats(const SignalBatch& train);
NormStats fit_norm_stats(const dataset::Corpus& corpus, std::span<const std::size_t> rows);

SignalBatch apply_norm(const SignalBatch& signals, const NormStats& stats);
void apply_norm_inplace(SignalBatch& signals, const NormStats& stats);

struct ClassWeights {
    std::array<double, kNumClasses> base{};
    double hyp_multiplier = kDefaultHypMultiplier;
    std::array<double, kNumClasses> final{};
};

/// w_j = n_total / (n_classes * n_j) over the balanced label matrix, with
/// the HYP entry of `final` scaled by hyp_multiplier.
ClassWeights compute_class_weights(const LabelMatrix& balanced_labels, double hyp_multiplier = kDefaultHypMultiplier);

/// Mean of the final class weights over each row's positive labels; rows
/// without positives get 1.0.
std::vector<double> sample_weights(const LabelMatrix& labels, const ClassWeights& weights);

struct SplitSet {
    std::vector<std::size_t> train;       // corpus rows, may repeat
    std::vector<std::size_t> validation;  // corpus rows, may repeat
    std::vector<std::size_t> test;
    // Positions of train/validation entries within the balanced row list.
    std::vector<std::size_t> train_positions;
    std::vector<std::size_t> validation_positions;
};

/// Shuffles the balanced list with `seed` and holds out the last
/// floor(n * validation_fraction) entries for validation.
SplitSet make_split_set(std::span<const std::size_t> balanced_rows, std::span<const std::size_t> test_rows,
                        double validation_fraction, std::uint64_t seed);

std::string norm_stats_to_json(const NormStats& stats);
NormStats norm_stats_from_json(const std::string& text);

std::string class_weights_to_json(const ClassWeights& weights);
ClassWeights class_weights_from_json(const std::string& text);

}  // namespace ecg::preprocess
