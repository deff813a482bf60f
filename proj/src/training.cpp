#include "ecg/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ecg/evaluation.hpp"
#include "ecg/rng.hpp"

namespace ecg::training {

void TrainConfig::validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); };
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) bad("learning_rate must be positive");
    if (batch_size < 1) bad("batch_size must be >= 1");
    if (max_epochs < 1) bad("max_epochs must be >= 1");
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) bad("validation_fraction must lie in (0,1)");
    if (early_stop_patience < 1 || plateau_patience < 1) bad("patience values must be >= 1");
    if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) bad("plateau_factor must lie in (0,1)");
    if (!(min_lr > 0.0)) bad("min_lr must be positive");
}

LossResult weighted_bce(const ScoreMatrix& predictions, const LabelMatrix& targets, std::span<const double> weights) {
    const std::size_t n = predictions.size();
    if (targets.size() != n || weights.size() != n) {
        throw Error(ErrorKind::ShapeMismatch, "loss inputs have mismatched row counts");
    }
    if (n == 0) throw Error(ErrorKind::ShapeMismatch, "loss over an empty batch");
    constexpr double lo = kPredictionClamp, hi = 1.0 - kPredictionClamp;
    LossResult out;
    out.grad.resize(n);
    double total = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double w = weights[i];
        if (!std::isfinite(w)) throw Error(ErrorKind::NonFiniteInput, "sample weight " + std::to_string(i));
        double row = 0.0;
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            const double p = predictions[i][c];
            if (!std::isfinite(p)) throw Error(ErrorKind::NonFiniteInput, "prediction at row " + std::to_string(i));
            const double pc = std::clamp(p, lo, hi);
            const bool y = targets[i][c] != 0;
            row += y ? std::log(pc) : std::log(1.0 - pc);
            const bool clamped = p < lo || p > hi;
            out.grad[i][c] = clamped ? 0.0 : -w * inv_n * (y ? 1.0 / pc : -1.0 / (1.0 - pc));
        }
        total += w * row;
    }
    out.loss = -total * inv_n;
    return out;
}

AdamMoments AdamMoments::zeros_like(const nn::ModelState& state) {
    AdamMoments m;
    for (const auto& b : state.blocks) {
        m.first.emplace_back(b.trainable ? b.value.size() : 0, 0.0);
        m.second.emplace_back(b.trainable ? b.value.size() : 0, 0.0);
    }
    return m;
}

void adam_step(nn::ModelState& state, AdamMoments& moments, std::uint64_t step, double lr, const AdamConfig& config) {
    if (step < 1) throw Error(ErrorKind::InvalidConfig, "Adam step index starts at 1");
    if (moments.first.size() != state.blocks.size() || moments.second.size() != state.blocks.size()) {
        throw Error(ErrorKind::ShapeMismatch, "moment buffers do not match the model's blocks");
    }
    const double t = static_cast<double>(step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t k = 0; k < state.blocks.size(); ++k) {
        auto& b = state.blocks[k];
        if (!b.trainable) continue;
        auto& m = moments.first[k];
        auto& v = moments.second[k];
        if (m.size() != b.value.size() || v.size() != b.value.size() || b.grad.size() != b.value.size()) {
            throw Error(ErrorKind::ShapeMismatch, "moment buffer for " + b.name + " has the wrong length");
        }
        for (std::size_t i = 0; i < b.value.size(); ++i) {
            const double g = b.grad[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            b.value[i] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
    }
    ++state.version;
}

ValidationMonitor::ValidationMonitor(const TrainConfig& config, double initial_lr)
    : early_stop_patience_(config.early_stop_patience),
      plateau_patience_(config.plateau_patience),
      factor_(config.plateau_factor),
      min_lr_(config.min_lr),
      lr_(initial_lr),
      best_(std::numeric_limits<double>::infinity()) {}

ValidationMonitor::Decision ValidationMonitor::observe(double val_loss) {
    Decision d;
    if (val_loss < best_ - kMinDelta) {
        best_ = val_loss;
        stop_wait_ = 0;
        plateau_wait_ = 0;
        d.improved = true;
    } else {
        ++stop_wait_;
        ++plateau_wait_;
        if (plateau_wait_ >= plateau_patience_) {
            plateau_wait_ = 0;
            const double next = std::max(lr_ * factor_, min_lr_);
            if (next < lr_) {
                lr_ = next;
                d.reduce_lr = true;
            }
        }
        d.stop = stop_wait_ >= early_stop_patience_;
    }
    d.next_lr = lr_;
    return d;
}

SampleSet SampleSet::from_corpus(const dataset::Corpus& corpus, std::vector<std::size_t> rows,
                                 std::vector<double> weights, preprocess::NormStats stats) {
    if (weights.size() != rows.size()) throw Error(ErrorKind::ShapeMismatch, "one weight per row required");
    if (stats.leads() != corpus.leads()) {
        throw Error(ErrorKind::LeadCountMismatch, "stats cover " + std::to_string(stats.leads()) + " leads, corpus has " +
                                                      std::to_string(corpus.leads()));
    }
    SampleSet s;
    s.corpus_ = &corpus;
    s.labels_ = corpus.labels(rows);
    s.rows_ = std::move(rows);
    s.weights_ = std::move(weights);
    s.stats_ = std::move(stats);
    return s;
}

SampleSet SampleSet::from_tensor(Tensor3 signals, LabelMatrix labels, std::vector<double> weights) {
    if (signals.batch() != labels.size() || weights.size() != labels.size()) {
        throw Error(ErrorKind::ShapeMismatch, "signals, labels and weights must have one entry per sample");
    }
    SampleSet s;
    s.signals_ = std::make_shared<const Tensor3>(std::move(signals));
    s.labels_ = std::move(labels);
    s.weights_ = std::move(weights);
    return s;
}

Tensor3 SampleSet::gather(std::span<const std::size_t> positions) const {
    if (signals_) {
        const std::size_t stride = signals_->sample_stride();
        Tensor3 out(positions.size(), signals_->time(), signals_->channels());
        for (std::size_t b = 0; b < positions.size(); ++b) {
            const auto src = signals_->sample(positions[b]);
            std::copy(src.begin(), src.end(), out.data() + b * stride);
        }
        return out;
    }
    std::vector<std::size_t> rows;
    rows.reserve(positions.size());
    for (auto p : positions) rows.push_back(rows_[p]);
    Tensor3 out = dataset::gather_signals(*corpus_, rows);
    preprocess::apply_norm_inplace(out, stats_);
    return out;
}

LabelMatrix SampleSet::gather_labels(std::span<const std::size_t> positions) const {
    LabelMatrix out;
    out.reserve(positions.size());
    for (auto p : positions) out.push_back(labels_[p]);
    return out;
}

std::vector<double> SampleSet::gather_weights(std::span<const std::size_t> positions) const {
    std::vector<double> out;
    out.reserve(positions.size());
    for (auto p : positions) out.push_back(weights_[p]);
    return out;
}

namespace {

std::size_t correct_bits(const ScoreMatrix& pred, const LabelMatrix& truth) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            n += (pred[i][c] >= evaluation::kDefaultThreshold) == (truth[i][c] != 0);
        }
    }
    return n;
}

}  // namespace

ValidationScores score_set(const nn::ModelState& state, const SampleSet& set, std::size_t batch_size) {
    ValidationScores s;
    if (set.empty()) return s;
    double loss_sum = 0.0;
    evaluation::ConfusionCounts counts;
    std::vector<std::size_t> positions;
    for (std::size_t start = 0; start < set.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, set.size() - start);
        positions.resize(n);
        std::iota(positions.begin(), positions.end(), start);
        const auto pred = nn::infer(state, set.gather(positions));
        const auto labels = set.gather_labels(positions);
        const auto weights = set.gather_weights(positions);
        loss_sum += weighted_bce(pred, labels, weights).loss * static_cast<double>(n);
        counts += evaluation::confusion(evaluation::binarize(pred), labels);
    }
    const auto per_class = evaluation::per_class_metrics(counts);
    const auto agg = evaluation::aggregate_metrics(counts, per_class);
    s.loss = loss_sum / static_cast<double>(set.size());
    s.binary_accuracy = agg.binary_accuracy;
    s.micro_precision = agg.micro_precision;
    s.micro_recall = agg.micro_recall;
    return s;
}

TrainResult train(nn::ModelState model, const SampleSet& train_set, const SampleSet& validation_set,
                  const TrainConfig& config, const TrainHooks& hooks) {
    config.validate();
    if (train_set.empty()) throw Error(ErrorKind::EmptyTrainingSet, "training set is empty");
    if (validation_set.empty()) throw Error(ErrorKind::EmptyTrainingSet, "validation set is empty");
    if (config.batch_size > train_set.size()) {
        throw Error(ErrorKind::InvalidConfig, "batch_size " + std::to_string(config.batch_size) +
                                                  " exceeds training set size " + std::to_string(train_set.size()));
    }

    Rng shuffle_rng(config.seed);
    AdamMoments moments = AdamMoments::zeros_like(model);
    ValidationMonitor monitor(config, config.learning_rate);
    std::uint64_t step = 0;

    TrainResult result;
    result.best = model;
    result.stop.reason = "max_epochs";
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        const double lr = monitor.lr();
        shuffle_rng.shuffle(order.begin(), order.end());
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t n = std::min(config.batch_size, order.size() - start);
            const std::span<const std::size_t> positions(order.data() + start, n);
            const auto x = train_set.gather(positions);
            const auto y = train_set.gather_labels(positions);
            const auto w = train_set.gather_weights(positions);
            auto fwd = nn::forward(model, x, nn::Mode::Train);
            const auto loss = weighted_bce(fwd.predictions, y, w);
            if (!std::isfinite(loss.loss)) {
                throw Error(ErrorKind::NonFiniteLoss, "training loss became non-finite in epoch " + std::to_string(epoch));
            }
            nn::backward(model, fwd.cache, loss.grad);
            adam_step(model, moments, ++step, lr);
            loss_sum += loss.loss * static_cast<double>(n);
            correct += correct_bits(fwd.predictions, y);
        }

        const auto val = score_set(model, validation_set, config.batch_size);
        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        log.train_loss = loss_sum / static_cast<double>(train_set.size());
        log.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size() * kNumClasses);
        log.val_loss = hooks.val_loss_override ? hooks.val_loss_override(epoch, val.loss) : val.loss;
        log.val_acc = val.binary_accuracy;
        log.val_precision = val.micro_precision;
        log.val_recall = val.micro_recall;
        if (!std::isfinite(log.val_loss)) {
            throw Error(ErrorKind::NonFiniteLoss, "validation loss became non-finite in epoch " + std::to_string(epoch));
        }
        result.history.push_back(log);
        if (hooks.on_epoch) hooks.on_epoch(log);

        const auto decision = monitor.observe(log.val_loss);
        if (decision.improved) {
            result.best = model;
            result.stop.best_epoch = epoch;
            result.stop.best_val_loss = log.val_loss;
        }
        if (decision.reduce_lr) result.stop.lr_reduction_epochs.push_back(epoch);
        result.stop.epochs_completed = epoch;
        if (decision.stop) {
            result.stop.reason = "early_stopping";
            break;
        }
    }
    result.stop.final_lr = monitor.lr();
    result.last = std::move(model);
    return result;
}

namespace {

std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& field, std::size_t line) {
    double v = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
        throw Error(ErrorKind::MalformedInput, "history line " + std::to_string(line) + ": bad number '" + field + "'");
    }
    return v;
}

}  // namespace

std::string history_to_csv(const std::vector<EpochLog>& history) {
    std::string out = std::string(kHistoryHeader) + "\n";
    for (const auto& e : history) {
        out += std::to_string(e.epoch) + ',' + fmt(e.lr) + ',' + fmt(e.train_loss) + ',' + fmt(e.train_acc) + ',' +
               fmt(e.val_loss) + ',' + fmt(e.val_acc) + ',' + fmt(e.val_precision) + ',' + fmt(e.val_recall) + '\n';
    }
    return out;
}

std::vector<EpochLog> history_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::MalformedInput, "history is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kHistoryHeader) throw Error(ErrorKind::MalformedInput, "unexpected history header: " + line);
    std::vector<EpochLog> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 8) throw Error(ErrorKind::MalformedInput, "history line " + std::to_string(line_no) + " needs 8 fields");
        EpochLog e;
        const double epoch = parse_double(f[0], line_no);
        if (!(epoch >= 1.0) || epoch != std::floor(epoch)) {
            throw Error(ErrorKind::MalformedInput, "history line " + std::to_string(line_no) + ": bad epoch");
        }
        e.epoch = static_cast<std::size_t>(epoch);
        e.lr = parse_double(f[1], line_no);
        e.train_loss = parse_double(f[2], line_no);
        e.train_acc = parse_double(f[3], line_no);
        e.val_loss = parse_double(f[4], line_no);
        e.val_acc = parse_double(f[5], line_no);
        e.val_precision = parse_double(f[6], line_no);
        e.val_recall = parse_double(f[7], line_no);
        out.push_back(e);
    }
    return out;
}

std::string stop_info_to_json(const StopInfo& info) {
    nlohmann::json j;
    j["reason"] = info.reason;
    j["epochs_completed"] = info.epochs_completed;
    j["best_epoch"] = info.best_epoch;
    j["best_val_loss"] = info.best_val_loss;
    j["lr_reduction_epochs"] = info.lr_reduction_epochs;
    j["lr_reductions"] = info.lr_reduction_epochs.size();
    j["final_lr"] = info.final_lr;
    return j.dump(2) + "\n";
}

}  // namespace ecg::training
