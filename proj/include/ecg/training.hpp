#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecg/dataset.hpp"
#include "ecg/labels.hpp"
#include "ecg/nn/model.hpp"
#include "ecg/preprocess.hpp"

namespace ecg::training {

inline constexpr double kPredictionClamp = 1e-7;
inline constexpr double kMinDelta = 1e-9;

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 50;
    double validation_fraction = 0.20;
    std::size_t early_stop_patience = 10;
    std::size_t plateau_patience = 5;
    double plateau_factor = 0.5;
    double min_lr = 1e-7;
    std::uint64_t seed = 0;

    void validate() const;
};

struct LossResult {
    double loss = 0.0;
    ScoreMatrix grad;  // d(loss)/d(predictions)
};

/// -(1/N) sum_i w_i sum_j [y log p + (1-y) log(1-p)], predictions clamped to
/// [kPredictionClamp, 1 - kPredictionClamp]. The gradient is zero where the
/// clamp is active.
LossResult weighted_bce(const ScoreMatrix& predictions, const LabelMatrix& targets, std::span<const double> weights);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First and second moment buffers, one per trainable block (empty for
/// non-trainable blocks).
struct AdamMoments {
    std::vector<std::vector<double>> first;
    std::vector<std::vector<double>> second;

    static AdamMoments zeros_like(const nn::ModelState& state);
};

/// One bias-corrected Adam update from the gradients stored in `state`.
/// `step` is the 1-based update count.
void adam_step(nn::ModelState& state, AdamMoments& moments, std::uint64_t step, double lr,
               const AdamConfig& config = {});

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double lr = 0.0;        // in effect during the epoch
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double val_precision = 0.0;
    double val_recall = 0.0;

    bool operator==(const EpochLog&) const = default;
};

/// Early-stopping and reduce-on-plateau bookkeeping over validation losses.
/// The two patience counters run independently and both reset on
/// improvement; the plateau counter also resets after each reduction.
class ValidationMonitor {
public:
    struct Decision {
        bool improved = false;
        bool reduce_lr = false;
        bool stop = false;
        double next_lr = 0.0;
    };

    ValidationMonitor(const TrainConfig& config, double initial_lr);

    Decision observe(double val_loss);
    double lr() const noexcept { return lr_; }
    double best() const noexcept { return best_; }

private:
    std::size_t early_stop_patience_;
    std::size_t plateau_patience_;
    double factor_;
    double min_lr_;
    double lr_;
    double best_;
    std::size_t stop_wait_ = 0;
    std::size_t plateau_wait_ = 0;
};

/// Samples fed to training or validation. Backed either by corpus rows
/// normalized on the fly, or by an already-normalized in-memory tensor.
class SampleSet {
public:
    static SampleSet from_corpus(const dataset::Corpus& corpus, std::vector<std::size_t> rows,
                                 std::vector<double> weights, preprocess::NormStats stats);
    static SampleSet from_tensor(Tensor3 signals, LabelMatrix labels, std::vector<double> weights);

    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }
    const LabelMatrix& labels() const noexcept { return labels_; }
    const std::vector<double>& weights() const noexcept { return weights_; }

    /// Normalized signals for the given positions, in order.
    Tensor3 gather(std::span<const std::size_t> positions) const;
    LabelMatrix gather_labels(std::span<const std::size_t> positions) const;
    std::vector<double> gather_weights(std::span<const std::size_t> positions) const;

private:
    const dataset::Corpus* corpus_ = nullptr;
    std::vector<std::size_t> rows_;
    preprocess::NormStats stats_;
    std::shared_ptr<const Tensor3> signals_;
    LabelMatrix labels_;
    std::vector<double> weights_;
};

struct StopInfo {
    std::string reason;  // "early_stopping" or "max_epochs"
    std::size_t epochs_completed = 0;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    std::vector<std::size_t> lr_reduction_epochs;  // epoch after which the rate was cut
    double final_lr = 0.0;
};

struct TrainResult {
    nn::ModelState best;
    nn::ModelState last;
    std::vector<EpochLog> history;
    StopInfo stop;
};

struct TrainHooks {
    /// Replaces the measured validation loss before the callbacks see it.
    std::function<double(std::size_t epoch, double measured)> val_loss_override;
    /// Called after each epoch is logged.
    std::function<void(const EpochLog&)> on_epoch;
};

/// Mean weighted loss and thresholded metrics of an infer-mode pass.
struct ValidationScores {
    double loss = 0.0;
    double binary_accuracy = 0.0;
    double micro_precision = 0.0;
    double micro_recall = 0.0;
};

ValidationScores score_set(const nn::ModelState& state, const SampleSet& set, std::size_t batch_size);

/// Mini-batch training with Adam, early stopping, reduce-on-plateau and
/// best-state tracking. Returns the minimal-validation-loss state.
TrainResult train(nn::ModelState model, const SampleSet& train_set, const SampleSet& validation_set,
                  const TrainConfig& config, const TrainHooks& hooks = {});

inline constexpr const char* kHistoryHeader = "epoch,lr,train_loss,train_acc,val_loss,val_acc,val_precision,val_recall";

std::string history_to_csv(const std::vector<EpochLog>& history);
std::vector<EpochLog> history_from_csv(const std::string& text);

std::string stop_info_to_json(const StopInfo& info);

}  // namespace ecg::training
