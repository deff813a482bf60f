#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "ecg/dataset.hpp"
#include "ecg/nn/model.hpp"
#include "ecg/preprocess.hpp"
#include "ecg/training.hpp"

namespace ecg::pipeline {

enum class DataMode { Real, Synthetic };

/// Tunable widths and rates of the CNN-VAE, in config-file terms.
struct ModelShape {
    std::array<std::size_t, 3> filters = {64, 128, 256};
    std::array<std::size_t, 3> kernel_sizes = {5, 5, 3};
    std::array<double, 3> encoder_dropout = {0.2, 0.2, 0.3};
    std::size_t latent_dim = 32;
    std::array<std::size_t, 2> dense_units = {256, 128};
    std::array<double, 2> dense_dropout = {0.5, 0.5};
    bool include_log_var_head = false;
    double bn_momentum = nn::kBatchNormMomentum;
    double bn_epsilon = nn::kBatchNormEpsilon;

    nn::ModelConfig to_config(std::uint64_t seed) const;
};

/// Everything a pipeline command needs. Defaults are the full-size real-data
/// configuration; synthetic_preset() swaps in the desk-scale settings.
struct RunConfig {
    DataMode mode = DataMode::Real;
    std::filesystem::path metadata;
    std::filesystem::path signal_dir;
    std::filesystem::path out_dir = "ecg_out";

    std::size_t synthetic_samples = 2000;
    dataset::ClassMix synthetic_mix = {0.2, 0.15, 0.2, 0.4, 0.2};

    std::uint64_t seed = 0;
    preprocess::BalanceSpec balance = preprocess::BalanceSpec::defaults();
    double hyp_multiplier = preprocess::kDefaultHypMultiplier;
    training::TrainConfig train;
    ModelShape model;
    double threshold = 0.5;

    /// 2,000 synthetic records, a narrow model (8/16/32 filters, 64/32
    /// dense units with dropout 0.2), HYP and NORM targets of 400 and at
    /// most 30 epochs.
    static RunConfig synthetic_preset();

    void validate() const;
};

/// Applies `key = value` settings. Keys may be dotted or grouped under
/// `[section]` headers; `#` starts a comment; values may be quoted or
/// written as `[a, b, c]` lists. Unknown keys raise InvalidConfig.
void apply_config_text(RunConfig& config, const std::string& text);
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Keeps every seeded stage reproducible from the single run seed.
struct DerivedSeeds {
    std::uint64_t corpus, balance, split, model, train;
};
DerivedSeeds derive_seeds(std::uint64_t seed);

std::string run_config_to_json(const RunConfig& config);

dataset::Corpus load_run_corpus(const RunConfig& config);

struct PrepareArtifacts {
    std::filesystem::path balanced_indices;
    std::filesystem::path norm_stats;
    std::filesystem::path class_weights;
    std::filesystem::path summary;
};

PrepareArtifacts cmd_prepare(const RunConfig& config);

struct TrainArtifacts {
    std::filesystem::path best_checkpoint;
    std::filesystem::path final_checkpoint;
    std::filesystem::path history;
    std::filesystem::path stopping;
    training::StopInfo stop;
    std::vector<training::EpochLog> history_rows;
};

TrainArtifacts cmd_train(const RunConfig& config, const training::TrainHooks& hooks = {});

struct EvaluateArtifacts {
    std::filesystem::path report;
    std::filesystem::path confusion_csv;
    std::filesystem::path per_class_csv;
};

/// Uses `<out>/checkpoint_best.cvae` unless a checkpoint path is given.
EvaluateArtifacts cmd_evaluate(const RunConfig& config, const std::optional<std::filesystem::path>& checkpoint = {});

/// Writes training_curves.svg for a history CSV and confusion_<CLASS>.svg
/// plus confusion_all.svg for a report JSON. Returns the files written.
std::vector<std::filesystem::path> cmd_plot(const std::optional<std::filesystem::path>& history_csv,
                                            const std::optional<std::filesystem::path>& report_json,
                                            const std::filesystem::path& out_dir);

void cmd_run_all(const RunConfig& config);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

std::vector<std::size_t> read_balanced_indices(const std::filesystem::path& path);

}  // namespace ecg::pipeline
