#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ecg/labels.hpp"
#include "ecg/tensor.hpp"

namespace ecg::dataset {

inline constexpr std::size_t kTimeSteps = 1000;
inline constexpr std::size_t kLeads = 12;
inline constexpr int kNumFolds = 10;
inline constexpr int kTestFold = 10;

inline const std::array<std::string, kLeads> kStandardLeadNames = {
    "I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"};

struct ECGRecord {
    std::string record_id;
    std::vector<float> signal;  // time-major, lead-minor
    LabelRow labels{};
    int strat_fold = 1;
};

/// Immutable collection of records sharing one signal shape.
///
/// Ingestion and the synthetic generator always produce 1000 x 12 records;
/// the constructor accepts any uniform shape so that small hand-built
/// corpora can be used in tests.
class Corpus {
public:
    Corpus() = default;
    Corpus(std::vector<ECGRecord> records, std::size_t time_steps = kTimeSteps, std::size_t leads = kLeads);

    const std::vector<ECGRecord>& records() const noexcept { return records_; }
    const ECGRecord& operator[](std::size_t i) const { return records_[i]; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    std::size_t time_steps() const noexcept { return time_steps_; }
    std::size_t leads() const noexcept { return leads_; }
    const std::vector<std::string>& lead_names() const noexcept { return lead_names_; }

    /// Label rows for the given record indices, in order.
    LabelMatrix labels(std::span<const std::size_t> rows) const;
    LabelMatrix labels() const;

private:
    std::vector<ECGRecord> records_;
    std::vector<std::string> lead_names_;
    std::size_t time_steps_ = kTimeSteps;
    std::size_t leads_ = kLeads;
};

/// Reads the metadata CSV and one little-endian f32 signal file per row.
/// Relative signal_file entries resolve against signal_dir.
Corpus load_corpus(const std::filesystem::path& metadata_path, const std::filesystem::path& signal_dir);

/// Writes a corpus in the format read by load_corpus, one `<record_id>.bin`
/// signal file per record.
void save_corpus(const Corpus& corpus, const std::filesystem::path& metadata_path,
                 const std::filesystem::path& signal_dir);

std::vector<float> read_signal_file(const std::filesystem::path& path, const std::string& record_id);
void write_signal_file(const std::filesystem::path& path, std::span<const float> signal);

using ClassMix = std::array<double, kNumClasses>;

/// Named morphology constants for synthetic records.
namespace synthetic {
inline constexpr double kHypQrsGain = 1.8;         // HYP: QRS complex amplitude multiplier
inline constexpr double kMiQDepth = 0.45;          // MI: Q-wave depth relative to R amplitude
inline constexpr double kSttcStOffset = 0.15;      // STTC: ST segment lift relative to R amplitude
inline constexpr double kCdQrsWidening = 2.2;      // CD: QRS width multiplier
inline constexpr double kNoiseStd = 0.05;          // additive white noise, mV
inline constexpr double kWanderAmplitude = 0.05;   // baseline wander, mV
inline constexpr double kMinPeriod = 60.0;         // samples per beat at 100 Hz (100 bpm)
inline constexpr double kMaxPeriod = 100.0;        // 60 bpm
inline constexpr std::array<double, kLeads> kLeadGains = {0.9, 1.2, 0.4, -0.95, 0.5, 0.8,
                                                           -0.6, 0.7, 1.1, 1.3, 1.15, 0.9};
}  // namespace synthetic

/// Deterministic pseudo-ECG corpus with label-conditioned morphology.
///
/// NORM is drawn first with probability mix[NORM]; a NORM record carries no
/// other label. Otherwise each remaining class is drawn with probability
/// mix[c] / (1 - mix[NORM]), which keeps every marginal equal to mix[c]
/// whenever mix[c] <= 1 - mix[NORM].
Corpus generate_synthetic(std::size_t n, std::uint64_t seed, const ClassMix& class_mix);

ClassCounts class_counts(const Corpus& corpus);
ClassCounts class_counts(const LabelMatrix& labels);

/// Copies the selected records into a double-precision batch.
SignalBatch gather_signals(const Corpus& corpus, std::span<const std::size_t> rows);

}  // namespace ecg::dataset
