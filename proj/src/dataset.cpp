#include "ecg/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <string_view>
#include <unordered_set>

#include "ecg/rng.hpp"

namespace ecg::dataset {

namespace {

const std::array<std::string_view, 8> kMetadataColumns = {"record_id", "strat_fold", "CD",   "HYP",
                                                          "MI",        "NORM",       "STTC", "signal_file"};

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::uint8_t parse_label(const std::string& text, std::string_view column, std::size_t line_no) {
    if (text == "0") return 0;
    if (text == "1") return 1;
    throw Error(ErrorKind::SchemaMismatch, "column " + std::string(column) + " on line " + std::to_string(line_no) +
                                               " must be 0 or 1, got '" + text + "'");
}

int parse_fold(const std::string& text, const std::string& record_id) {
    int fold = 0;
    std::size_t consumed = 0;
    try {
        fold = std::stoi(text, &consumed);
    } catch (const std::exception&) {
        consumed = 0;
    }
    if (consumed != text.size() || text.empty() || fold < 1 || fold > kNumFolds) {
        throw Error(ErrorKind::BadFold, "record " + record_id + " has strat_fold '" + text + "' outside 1..10");
    }
    return fold;
}

float load_le_f32(const unsigned char* p) {
    const std::uint32_t bits = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
                               (std::uint32_t(p[3]) << 24);
    return std::bit_cast<float>(bits);
}

void store_le_f32(float v, unsigned char* p) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    p[0] = static_cast<unsigned char>(bits);
    p[1] = static_cast<unsigned char>(bits >> 8);
    p[2] = static_cast<unsigned char>(bits >> 16);
    p[3] = static_cast<unsigned char>(bits >> 24);
}

}  // namespace

Corpus::Corpus(std::vector<ECGRecord> records, std::size_t time_steps, std::size_t leads)
    : records_(std::move(records)), time_steps_(time_steps), leads_(leads) {
    if (leads_ == kLeads) {
        lead_names_.assign(kStandardLeadNames.begin(), kStandardLeadNames.end());
    } else {
        for (std::size_t j = 0; j < leads_; ++j) lead_names_.push_back("lead" + std::to_string(j + 1));
    }
    std::unordered_set<std::string> seen;
    for (const auto& r : records_) {
        if (!seen.insert(r.record_id).second) {
            throw Error(ErrorKind::SchemaMismatch, "duplicate record_id " + r.record_id);
        }
        if (r.signal.size() != time_steps_ * leads_) {
            throw Error(ErrorKind::BadSignalShape, "record " + r.record_id + " holds " +
                                                       std::to_string(r.signal.size()) + " values, expected " +
                                                       std::to_string(time_steps_) + "x" + std::to_string(leads_));
        }
        if (r.strat_fold < 1 || r.strat_fold > kNumFolds) {
            throw Error(ErrorKind::BadFold,
                        "record " + r.record_id + " has strat_fold " + std::to_string(r.strat_fold));
        }
        for (auto v : r.labels) {
            if (v > 1) throw Error(ErrorKind::SchemaMismatch, "record " + r.record_id + " has a non-binary label");
        }
    }
}

LabelMatrix Corpus::labels(std::span<const std::size_t> rows) const {
    LabelMatrix out;
    out.reserve(rows.size());
    for (auto i : rows) out.push_back(records_.at(i).labels);
    return out;
}

LabelMatrix Corpus::labels() const {
    LabelMatrix out;
    out.reserve(records_.size());
    for (const auto& r : records_) out.push_back(r.labels);
    return out;
}

std::vector<float> read_signal_file(const std::filesystem::path& path, const std::string& record_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::MissingFile, path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t expected = kTimeSteps * kLeads * sizeof(float);
    if (bytes.size() != expected) {
        std::string dims;
        if (bytes.size() % (kLeads * sizeof(float)) == 0) {
            dims = std::to_string(bytes.size() / (kLeads * sizeof(float))) + "x" + std::to_string(kLeads);
        } else {
            dims = std::to_string(bytes.size()) + " bytes";
        }
        throw Error(ErrorKind::BadSignalShape, "record " + record_id + " signal is " + dims + ", expected " +
                                                   std::to_string(kTimeSteps) + "x" + std::to_string(kLeads));
    }
    std::vector<float> signal(kTimeSteps * kLeads);
    for (std::size_t i = 0; i < signal.size(); ++i) signal[i] = load_le_f32(bytes.data() + 4 * i);
    return signal;
}

void write_signal_file(const std::filesystem::path& path, std::span<const float> signal) {
    std::vector<unsigned char> bytes(signal.size() * 4);
    for (std::size_t i = 0; i < signal.size(); ++i) store_le_f32(signal[i], bytes.data() + 4 * i);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::IoFailure, "short write to " + path.string());
}

Corpus load_corpus(const std::filesystem::path& metadata_path, const std::filesystem::path& signal_dir) {
    std::ifstream in(metadata_path);
    if (!in) throw Error(ErrorKind::MissingFile, metadata_path.string());

    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::SchemaMismatch, "metadata file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);

    std::map<std::string_view, std::size_t> column_index;
    for (auto name : kMetadataColumns) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw Error(ErrorKind::SchemaMismatch, "missing column " + std::string(name));
        column_index[name] = static_cast<std::size_t>(it - header.begin());
    }

    std::vector<ECGRecord> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw Error(ErrorKind::SchemaMismatch, "line " + std::to_string(line_no) + " has " +
                                                       std::to_string(fields.size()) + " fields, header has " +
                                                       std::to_string(header.size()));
        }
        ECGRecord r;
        r.record_id = fields[column_index["record_id"]];
        if (r.record_id.empty()) {
            throw Error(ErrorKind::SchemaMismatch, "column record_id is empty on line " + std::to_string(line_no));
        }
        r.strat_fold = parse_fold(fields[column_index["strat_fold"]], r.record_id);
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            r.labels[c] = parse_label(fields[column_index[kClassNames[c]]], kClassNames[c], line_no);
        }
        std::filesystem::path signal_path = fields[column_index["signal_file"]];
        if (signal_path.is_relative()) signal_path = signal_dir / signal_path;
        r.signal = read_signal_file(signal_path, r.record_id);
        records.push_back(std::move(r));
    }
    return Corpus(std::move(records));
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& metadata_path,
                 const std::filesystem::path& signal_dir) {
    std::filesystem::create_directories(signal_dir);
    std::ofstream meta(metadata_path, std::ios::binary | std::ios::trunc);
    if (!meta) throw Error(ErrorKind::IoFailure, "cannot write " + metadata_path.string());
    meta << "record_id,strat_fold,CD,HYP,MI,NORM,STTC,signal_file\n";
    for (const auto& r : corpus.records()) {
        const std::string file = r.record_id + ".bin";
        meta << r.record_id << ',' << r.strat_fold;
        for (auto v : r.labels) meta << ',' << int(v);
        meta << ',' << file << '\n';
        write_signal_file(signal_dir / file, r.signal);
    }
    if (!meta) throw Error(ErrorKind::IoFailure, "short write to " + metadata_path.string());
}

namespace {

double gaussian_bump(double x, double width) { return std::exp(-0.5 * (x / width) * (x / width)); }

struct BeatShape {
    double qrs_gain = 1.0;
    double qrs_width = 1.0;
    double q_depth = 0.1;
    double st_offset = 0.0;
};

// One beat's waveform at offset dt (samples) from the R peak, R amplitude 1.
double beat_template(double dt, const BeatShape& s) {
    const double w = 1.6 * s.qrs_width;
    double v = 0.15 * gaussian_bump(dt + 17.0, 3.0);                            // P
    v -= s.qrs_gain * s.q_depth * gaussian_bump(dt + 2.2 * s.qrs_width, 0.9 * s.qrs_width);  // Q
    v += s.qrs_gain * gaussian_bump(dt, w);                                     // R
    v -= s.qrs_gain * 0.25 * gaussian_bump(dt - 2.4 * s.qrs_width, 1.0 * s.qrs_width);  // S
    v += 0.3 * gaussian_bump(dt - 26.0, 5.0);                                   // T
    if (s.st_offset != 0.0) {
        // Smooth plateau over the ST segment.
        const double rise = 1.0 / (1.0 + std::exp(-(dt - 4.0 * s.qrs_width)));
        const double fall = 1.0 / (1.0 + std::exp(dt - 24.0));
        v += s.st_offset * rise * fall;
    }
    return v;
}

}  // namespace

Corpus generate_synthetic(std::size_t n, std::uint64_t seed, const ClassMix& class_mix) {
    if (n < 1) throw Error(ErrorKind::InvalidConfig, "synthetic corpus size must be at least 1");
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const double p = class_mix[c];
        if (!(p >= 0.0 && p <= 1.0)) {
            throw Error(ErrorKind::InvalidProbability,
                        std::string(kClassNames[c]) + " probability " + std::to_string(p) + " outside [0,1]");
        }
    }

    using namespace synthetic;
    const double p_norm = class_mix[index_of(DiagClass::NORM)];
    Rng rng(seed);
    std::vector<ECGRecord> records;
    records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ECGRecord r;
        char id[32];
        std::snprintf(id, sizeof id, "syn%06zu", i);
        r.record_id = id;

        const bool norm = rng.bernoulli(p_norm);
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            if (c == index_of(DiagClass::NORM)) continue;
            // Always consume a draw so the stream layout does not depend on NORM.
            const double u = rng.uniform();
            const double p = p_norm < 1.0 ? std::min(1.0, class_mix[c] / (1.0 - p_norm)) : 0.0;
            r.labels[c] = (!norm && u < p) ? 1 : 0;
        }
        r.labels[index_of(DiagClass::NORM)] = norm ? 1 : 0;
        r.strat_fold = static_cast<int>(rng.index(kNumFolds)) + 1;

        BeatShape shape;
        if (r.labels[index_of(DiagClass::HYP)]) shape.qrs_gain = kHypQrsGain;
        if (r.labels[index_of(DiagClass::CD)]) shape.qrs_width = kCdQrsWidening;
        if (r.labels[index_of(DiagClass::MI)]) shape.q_depth = kMiQDepth;
        if (r.labels[index_of(DiagClass::STTC)]) shape.st_offset = kSttcStOffset;

        const double period = rng.uniform(kMinPeriod, kMaxPeriod);
        const double phase = rng.uniform(0.0, period);
        const double amplitude = rng.normal(1.0, 0.08);
        const double wander_freq = rng.uniform(0.002, 0.008);
        const double wander_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        std::array<double, kLeads> lead_jitter{};
        for (auto& g : lead_jitter) g = rng.normal(1.0, 0.05);

        r.signal.resize(kTimeSteps * kLeads);
        for (std::size_t t = 0; t < kTimeSteps; ++t) {
            const double td = static_cast<double>(t);
            // Sum contributions of the beats whose template reaches t.
            const double k_lo = std::ceil((td - 60.0 - phase) / period);
            const double k_hi = std::floor((td + 40.0 - phase) / period);
            double beat = 0.0;
            for (double k = k_lo; k <= k_hi; k += 1.0) beat += beat_template(td - (phase + k * period), shape);
            const double wander = kWanderAmplitude * std::sin(2.0 * std::numbers::pi * wander_freq * td + wander_phase);
            for (std::size_t j = 0; j < kLeads; ++j) {
                const double v = amplitude * kLeadGains[j] * lead_jitter[j] * beat + wander + rng.normal(0.0, kNoiseStd);
                r.signal[t * kLeads + j] = static_cast<float>(v);
            }
        }
        records.push_back(std::move(r));
    }
    return Corpus(std::move(records));
}

ClassCounts class_counts(const LabelMatrix& labels) {
    ClassCounts counts{};
    for (const auto& row : labels) {
        for (std::size_t c = 0; c < kNumClasses; ++c) counts[c] += row[c] != 0;
    }
    return counts;
}

ClassCounts class_counts(const Corpus& corpus) {
    ClassCounts counts{};
    for (const auto& r : corpus.records()) {
        for (std::size_t c = 0; c < kNumClasses; ++c) counts[c] += r.labels[c] != 0;
    }
    return counts;
}

SignalBatch gather_signals(const Corpus& corpus, std::span<const std::size_t> rows) {
    SignalBatch batch(rows.size(), corpus.time_steps(), corpus.leads());
    for (std::size_t b = 0; b < rows.size(); ++b) {
        const auto& sig = corpus[rows[b]].signal;
        std::copy(sig.begin(), sig.end(), batch.sample(b).begin());
    }
    return batch;
}

}  // namespace ecg::dataset
