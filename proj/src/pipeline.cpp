#include "ecg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ecg/evaluation.hpp"
#include "ecg/nn/checkpoint.hpp"
#include "ecg/plot.hpp"

namespace ecg::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

nn::ModelConfig ModelShape::to_config(std::uint64_t seed) const {
    nn::ModelConfig c;
    using nn::LayerSpec;
    for (std::size_t i = 0; i < 3; ++i) {
        c.encoder.push_back(LayerSpec::conv(filters[i], kernel_sizes[i]));
        c.encoder.push_back(LayerSpec::batch_norm());
        c.encoder.push_back(LayerSpec::max_pool(2));
        c.encoder.push_back(LayerSpec::dropout(encoder_dropout[i]));
    }
    c.encoder.push_back(LayerSpec::global_avg_pool());
    c.latent_dim = latent_dim;
    c.include_log_var_head = include_log_var_head;
    for (std::size_t i = 0; i < 2; ++i) {
        c.classifier.push_back(LayerSpec::dense(dense_units[i]));
        c.classifier.push_back(LayerSpec::relu());
        c.classifier.push_back(LayerSpec::batch_norm());
        c.classifier.push_back(LayerSpec::dropout(dense_dropout[i]));
    }
    c.classifier.push_back(LayerSpec::dense(kNumClasses));
    c.classifier.push_back(LayerSpec::sigmoid());
    c.bn_momentum = bn_momentum;
    c.bn_epsilon = bn_epsilon;
    c.seed = seed;
    return c;
}

RunConfig RunConfig::synthetic_preset() {
    RunConfig c;
    c.mode = DataMode::Synthetic;
    c.synthetic_samples = 2000;
    c.model.filters = {8, 16, 32};
    c.model.dense_units = {64, 32};
    c.model.dense_dropout = {0.2, 0.2};
    c.balance.targets[index_of(DiagClass::HYP)] = 400;
    c.balance.targets[index_of(DiagClass::NORM)] = 400;
    c.train.max_epochs = 30;
    return c;
}

void RunConfig::validate() const {
    if (mode == DataMode::Real && metadata.empty()) {
        throw Error(ErrorKind::InvalidConfig, "real-data mode requires a metadata path");
    }
    if (mode == DataMode::Synthetic && synthetic_samples < 1) {
        throw Error(ErrorKind::InvalidConfig, "synthetic sample count must be >= 1");
    }
    if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorKind::InvalidConfig, "threshold must lie in (0,1)");
    if (!(hyp_multiplier > 0.0)) throw Error(ErrorKind::InvalidConfig, "hyp_multiplier must be positive");
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (balance.targets[c] && *balance.targets[c] < 1) {
            throw Error(ErrorKind::InvalidConfig, "balance target for " + std::string(kClassNames[c]) + " must be >= 1");
        }
    }
    train.validate();
    model.to_config(0).validate();
}

DerivedSeeds derive_seeds(std::uint64_t seed) {
    // splitmix64 steps give well-separated streams.
    auto mix = [](std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    };
    return {mix(seed * 5 + 0), mix(seed * 5 + 1), mix(seed * 5 + 2), mix(seed * 5 + 3), mix(seed * 5 + 4)};
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string unquote(std::string v) {
    if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\''))) {
        return v.substr(1, v.size() - 2);
    }
    return v;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
    throw Error(ErrorKind::InvalidConfig, "invalid value '" + value + "' for " + key);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) bad_value(key, v);
        return d;
    } catch (const std::logic_error&) {
        bad_value(key, v);
    }
}

std::size_t to_count(const std::string& key, const std::string& v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) bad_value(key, v);
    try {
        return static_cast<std::size_t>(std::stoull(v));
    } catch (const std::logic_error&) {
        bad_value(key, v);
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    bad_value(key, v);
}

std::vector<std::string> to_list(const std::string& key, std::string v, std::size_t expected) {
    if (!v.empty() && v.front() == '[') {
        if (v.back() != ']') bad_value(key, v);
        v = v.substr(1, v.size() - 2);
    }
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(unquote(trim(item)));
    if (out.size() != expected) {
        throw Error(ErrorKind::InvalidConfig, key + " needs " + std::to_string(expected) + " values");
    }
    return out;
}

template <std::size_t N>
std::array<std::size_t, N> count_list(const std::string& key, const std::string& v) {
    const auto items = to_list(key, v, N);
    std::array<std::size_t, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = to_count(key, items[i]);
    return out;
}

template <std::size_t N>
std::array<double, N> double_list(const std::string& key, const std::string& v) {
    const auto items = to_list(key, v, N);
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = to_double(key, items[i]);
    return out;
}

}  // namespace

void apply_setting(RunConfig& c, const std::string& raw_key, const std::string& raw_value) {
    std::string key = trim(raw_key);
    if (key.rfind("training.", 0) == 0) key = key.substr(9);
    const std::string v = unquote(trim(raw_value));
    auto& t = c.train;
    auto& m = c.model;

    if (key == "mode") {
        if (v == "real") {
            c.mode = DataMode::Real;
        } else if (v == "synthetic") {
            c.mode = DataMode::Synthetic;
        } else {
            bad_value(key, v);
        }
    } else if (key == "metadata" || key == "data.metadata") {
        c.metadata = v;
    } else if (key == "signal_dir" || key == "data.signal_dir") {
        c.signal_dir = v;
    } else if (key == "out" || key == "out_dir") {
        c.out_dir = v;
    } else if (key == "synthetic.samples" || key == "synthetic.n") {
        c.synthetic_samples = to_count(key, v);
    } else if (key == "synthetic.mix") {
        c.synthetic_mix = double_list<kNumClasses>(key, v);
    } else if (key == "seed") {
        c.seed = to_count(key, v);
    } else if (key.rfind("balance.", 0) == 0) {
        const auto cls = parse_class(key.substr(8));
        if (!cls) throw Error(ErrorKind::InvalidConfig, "unknown class in " + key);
        if (v == "none") {
            c.balance.targets[index_of(*cls)].reset();
        } else {
            c.balance.targets[index_of(*cls)] = to_count(key, v);
        }
    } else if (key == "hyp_multiplier" || key == "class_weights.hyp_multiplier") {
        c.hyp_multiplier = to_double(key, v);
    } else if (key == "learning_rate") {
        t.learning_rate = to_double(key, v);
    } else if (key == "batch_size") {
        t.batch_size = to_count(key, v);
    } else if (key == "epochs" || key == "max_epochs") {
        t.max_epochs = to_count(key, v);
    } else if (key == "validation_split") {
        t.validation_fraction = to_double(key, v);
    } else if (key == "early_stopping.patience") {
        t.early_stop_patience = to_count(key, v);
    } else if (key == "reduce_lr_on_plateau.patience") {
        t.plateau_patience = to_count(key, v);
    } else if (key == "reduce_lr_on_plateau.factor") {
        t.plateau_factor = to_double(key, v);
    } else if (key == "reduce_lr_on_plateau.min_lr") {
        t.min_lr = to_double(key, v);
    } else if (key == "threshold") {
        c.threshold = to_double(key, v);
    } else if (key == "model.filters") {
        m.filters = count_list<3>(key, v);
    } else if (key == "model.kernel_sizes") {
        m.kernel_sizes = count_list<3>(key, v);
    } else if (key == "model.encoder_dropout") {
        m.encoder_dropout = double_list<3>(key, v);
    } else if (key == "model.latent_dim") {
        m.latent_dim = to_count(key, v);
    } else if (key == "model.dense_units") {
        m.dense_units = count_list<2>(key, v);
    } else if (key == "model.dense_dropout") {
        m.dense_dropout = double_list<2>(key, v);
    } else if (key == "model.include_log_var_head") {
        m.include_log_var_head = to_bool(key, v);
    } else if (key == "model.bn_momentum") {
        m.bn_momentum = to_double(key, v);
    } else if (key == "model.bn_epsilon") {
        m.bn_epsilon = to_double(key, v);
    } else {
        throw Error(ErrorKind::InvalidConfig, "unknown config key " + key);
    }
}

void apply_config_text(RunConfig& config, const std::string& text) {
    std::istringstream in(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        // Strip comments outside quotes.
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorKind::InvalidConfig, "config line " + std::to_string(line_no) + " is not key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        apply_setting(config, section.empty() ? key : section + "." + key, line.substr(eq + 1));
    }
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::MissingFile, path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorKind::IoFailure, "short write to " + path.string());
}

namespace {

json model_json(const nn::ModelConfig& c) {
    auto layers = [](const std::vector<nn::LayerSpec>& specs) {
        json arr = json::array();
        for (const auto& s : specs) {
            json l;
            l["kind"] = std::string(nn::layer_kind_name(s.kind));
            if (s.units) l["units"] = s.units;
            if (s.kernel) l["kernel"] = s.kernel;
            if (s.pool) l["pool"] = s.pool;
            if (s.kind == nn::LayerKind::Dropout) l["rate"] = s.rate;
            arr.push_back(l);
        }
        return arr;
    };
    json j;
    j["input_channels"] = c.input_channels;
    j["encoder"] = layers(c.encoder);
    j["latent_dim"] = c.latent_dim;
    j["include_log_var_head"] = c.include_log_var_head;
    j["classifier"] = layers(c.classifier);
    j["bn_momentum"] = c.bn_momentum;
    j["bn_epsilon"] = c.bn_epsilon;
    return j;
}

json counts_json(const ClassCounts& counts) {
    json j;
    for (std::size_t c = 0; c < kNumClasses; ++c) j[std::string(kClassNames[c])] = counts[c];
    return j;
}

void require_file(const fs::path& p) {
    if (!fs::exists(p)) throw Error(ErrorKind::MissingFile, p.string());
}

}  // namespace

std::string run_config_to_json(const RunConfig& c) {
    const auto seeds = derive_seeds(c.seed);
    json j;
    j["mode"] = c.mode == DataMode::Real ? "real" : "synthetic";
    j["metadata"] = c.metadata.string();
    j["signal_dir"] = c.signal_dir.string();
    if (c.mode == DataMode::Synthetic) {
        j["synthetic"] = {{"samples", c.synthetic_samples}, {"mix", c.synthetic_mix}};
    }
    j["seed"] = c.seed;
    json targets;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        targets[std::string(kClassNames[k])] = c.balance.targets[k] ? json(*c.balance.targets[k]) : json("none");
    }
    j["balance"] = targets;
    j["hyp_multiplier"] = c.hyp_multiplier;
    j["learning_rate"] = c.train.learning_rate;
    j["batch_size"] = c.train.batch_size;
    j["epochs"] = c.train.max_epochs;
    j["validation_split"] = c.train.validation_fraction;
    j["early_stopping"] = {{"patience", c.train.early_stop_patience}};
    j["reduce_lr_on_plateau"] = {
        {"patience", c.train.plateau_patience}, {"factor", c.train.plateau_factor}, {"min_lr", c.train.min_lr}};
    j["threshold"] = c.threshold;
    j["model"] = model_json(c.model.to_config(seeds.model));
    return j.dump(2) + "\n";
}

dataset::Corpus load_run_corpus(const RunConfig& config) {
    if (config.mode == DataMode::Synthetic) {
        return dataset::generate_synthetic(config.synthetic_samples, derive_seeds(config.seed).corpus,
                                           config.synthetic_mix);
    }
    const fs::path signal_dir = config.signal_dir.empty() ? config.metadata.parent_path() : config.signal_dir;
    return dataset::load_corpus(config.metadata, signal_dir);
}

std::vector<std::size_t> read_balanced_indices(const fs::path& path) {
    const auto text = read_text(path);
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "row,record_id") {
        throw Error(ErrorKind::MalformedInput, path.string() + ": expected header row,record_id");
    }
    std::vector<std::size_t> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        const std::string field = line.substr(0, comma);
        if (field.empty() || field.find_first_not_of("0123456789") != std::string::npos) {
            throw Error(ErrorKind::MalformedInput, path.string() + ": bad row index '" + field + "'");
        }
        rows.push_back(static_cast<std::size_t>(std::stoull(field)));
    }
    return rows;
}

PrepareArtifacts cmd_prepare(const RunConfig& config) {
    config.validate();
    const auto seeds = derive_seeds(config.seed);
    const auto corpus = load_run_corpus(config);
    const auto split = preprocess::stratified_split(corpus);
    if (split.train.empty()) throw Error(ErrorKind::EmptyTrainingSet, "no records in folds 1-9");

    const auto labels = corpus.labels();
    auto spec = config.balance;
    spec.seed = seeds.balance;
    const auto balanced = preprocess::balance(split.train, labels, spec);
    const auto stats = preprocess::fit_norm_stats(corpus, balanced.rows);
    const auto balanced_labels = corpus.labels(balanced.rows);
    const auto weights = preprocess::compute_class_weights(balanced_labels, config.hyp_multiplier);

    fs::create_directories(config.out_dir);
    PrepareArtifacts out;
    out.balanced_indices = config.out_dir / "balanced_indices.csv";
    out.norm_stats = config.out_dir / "norm_stats.json";
    out.class_weights = config.out_dir / "class_weights.json";
    out.summary = config.out_dir / "prep_summary.json";

    std::string index_csv = "row,record_id\n";
    for (auto r : balanced.rows) index_csv += std::to_string(r) + "," + corpus[r].record_id + "\n";
    write_text(out.balanced_indices, index_csv);
    write_text(out.norm_stats, preprocess::norm_stats_to_json(stats));
    write_text(out.class_weights, preprocess::class_weights_to_json(weights));
    write_text(config.out_dir / "run_config.json", run_config_to_json(config));

    const auto before = dataset::class_counts(corpus.labels(split.train));
    const auto n_val = static_cast<std::size_t>(
        std::floor(static_cast<double>(balanced.rows.size()) * config.train.validation_fraction));
    json s;
    s["corpus_records"] = corpus.size();
    s["corpus_class_counts"] = counts_json(dataset::class_counts(corpus));
    s["train_records"] = split.train.size();
    s["test_records"] = split.test.size();
    s["train_class_counts_before"] = counts_json(before);
    s["balanced_contributions"] = counts_json(balanced.contributions);
    s["balanced_total"] = balanced.rows.size();
    s["balanced_label_counts"] = counts_json(dataset::class_counts(balanced_labels));
    json change;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const double pct = before[c] ? 100.0 * (double(balanced.contributions[c]) / double(before[c]) - 1.0) : 0.0;
        change[std::string(kClassNames[c])] = pct;
    }
    s["contribution_change_percent"] = change;
    const auto shape = [&](std::size_t n) { return json::array({n, corpus.time_steps(), corpus.leads()}); };
    s["shapes"] = {{"train", shape(balanced.rows.size() - n_val)},
                   {"validation", shape(n_val)},
                   {"balanced", shape(balanced.rows.size())},
                   {"test", shape(split.test.size())}};
    write_text(out.summary, s.dump(2) + "\n");
    return out;
}

TrainArtifacts cmd_train(const RunConfig& config, const training::TrainHooks& hooks) {
    config.validate();
    const auto seeds = derive_seeds(config.seed);
    const fs::path indices_path = config.out_dir / "balanced_indices.csv";
    const fs::path stats_path = config.out_dir / "norm_stats.json";
    const fs::path weights_path = config.out_dir / "class_weights.json";
    for (const auto& p : {indices_path, stats_path, weights_path}) require_file(p);

    const auto corpus = load_run_corpus(config);
    const auto balanced = read_balanced_indices(indices_path);
    for (auto r : balanced) {
        if (r >= corpus.size()) throw Error(ErrorKind::MalformedInput, "balanced index " + std::to_string(r) + " out of range");
    }
    const auto stats = preprocess::norm_stats_from_json(read_text(stats_path));
    const auto class_weights = preprocess::class_weights_from_json(read_text(weights_path));
    const auto row_weights = preprocess::sample_weights(corpus.labels(balanced), class_weights);

    const auto split = preprocess::stratified_split(corpus);
    const auto sets = preprocess::make_split_set(balanced, split.test, config.train.validation_fraction, seeds.split);
    auto pick = [&](const std::vector<std::size_t>& positions) {
        std::vector<double> w;
        for (auto p : positions) w.push_back(row_weights[p]);
        return w;
    };
    const auto train_set = training::SampleSet::from_corpus(corpus, sets.train, pick(sets.train_positions), stats);
    const auto val_set = training::SampleSet::from_corpus(corpus, sets.validation, pick(sets.validation_positions), stats);

    auto train_cfg = config.train;
    train_cfg.seed = seeds.train;
    auto model = nn::build_model(config.model.to_config(seeds.model));
    if (model.config.input_channels != corpus.leads()) {
        throw Error(ErrorKind::InvalidConfig, "model input channels do not match corpus leads");
    }
    auto result = training::train(std::move(model), train_set, val_set, train_cfg, hooks);

    TrainArtifacts out;
    out.best_checkpoint = config.out_dir / "checkpoint_best.cvae";
    out.final_checkpoint = config.out_dir / "checkpoint_final.cvae";
    out.history = config.out_dir / "history.csv";
    out.stopping = config.out_dir / "stopping.json";
    nn::save_checkpoint(result.best, out.best_checkpoint);
    nn::save_checkpoint(result.last, out.final_checkpoint);
    write_text(out.history, training::history_to_csv(result.history));
    write_text(out.stopping, training::stop_info_to_json(result.stop));
    out.stop = result.stop;
    out.history_rows = std::move(result.history);
    return out;
}

EvaluateArtifacts cmd_evaluate(const RunConfig& config, const std::optional<fs::path>& checkpoint) {
    config.validate();
    const auto seeds = derive_seeds(config.seed);
    const fs::path ckpt_path = checkpoint.value_or(config.out_dir / "checkpoint_best.cvae");
    const fs::path stats_path = config.out_dir / "norm_stats.json";
    require_file(ckpt_path);
    require_file(stats_path);

    const auto state = nn::load_checkpoint(ckpt_path);
    const auto stats = preprocess::norm_stats_from_json(read_text(stats_path));
    const auto expected = config.model.to_config(seeds.model);
    if (!(state.config == expected)) {
        throw Error(ErrorKind::CheckpointMismatch, "checkpoint layer manifest differs from the configured model");
    }
    if (stats.leads() != state.config.input_channels) {
        throw Error(ErrorKind::CheckpointMismatch, "normalization stats cover " + std::to_string(stats.leads()) +
                                                       " leads, checkpoint expects " +
                                                       std::to_string(state.config.input_channels));
    }

    const auto corpus = load_run_corpus(config);
    if (corpus.leads() != stats.leads()) {
        throw Error(ErrorKind::CheckpointMismatch, "corpus has " + std::to_string(corpus.leads()) + " leads");
    }
    const auto split = preprocess::stratified_split(corpus);
    if (split.test.empty()) throw Error(ErrorKind::InvalidConfig, "test fold is empty");

    const auto test_set = training::SampleSet::from_corpus(corpus, split.test, std::vector<double>(split.test.size(), 1.0), stats);
    ScoreMatrix probs;
    double loss_sum = 0.0;
    const std::size_t bs = config.train.batch_size;
    std::vector<std::size_t> positions;
    for (std::size_t start = 0; start < test_set.size(); start += bs) {
        const std::size_t n = std::min(bs, test_set.size() - start);
        positions.resize(n);
        std::iota(positions.begin(), positions.end(), start);
        const auto p = nn::infer(state, test_set.gather(positions));
        loss_sum += training::weighted_bce(p, test_set.gather_labels(positions), test_set.gather_weights(positions)).loss *
                    static_cast<double>(n);
        probs.insert(probs.end(), p.begin(), p.end());
    }
    auto report = evaluation::evaluate(probs, test_set.labels(), config.threshold);
    report.loss = loss_sum / static_cast<double>(test_set.size());

    EvaluateArtifacts out;
    out.report = config.out_dir / "report.json";
    out.confusion_csv = config.out_dir / "confusion.csv";
    out.per_class_csv = config.out_dir / "per_class.csv";
    write_text(out.report, evaluation::report_to_json(report));
    write_text(out.confusion_csv, evaluation::confusion_to_csv(report.confusion));
    write_text(out.per_class_csv, evaluation::per_class_to_csv(report.per_class));
    return out;
}

std::vector<fs::path> cmd_plot(const std::optional<fs::path>& history_csv, const std::optional<fs::path>& report_json,
                               const fs::path& out_dir) {
    if (!history_csv && !report_json) throw Error(ErrorKind::MalformedInput, "nothing to plot");
    fs::create_directories(out_dir);
    std::vector<fs::path> written;
    if (history_csv) {
        const auto history = training::history_from_csv(read_text(*history_csv));
        const auto path = out_dir / "training_curves.svg";
        write_text(path, plot::training_curves_svg(history));
        written.push_back(path);
    }
    if (report_json) {
        const auto report = evaluation::report_from_json(read_text(*report_json));
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            const auto path = out_dir / ("confusion_" + std::string(kClassNames[c]) + ".svg");
            write_text(path, plot::confusion_svg(std::string(kClassNames[c]), report.confusion.classes[c]));
            written.push_back(path);
        }
        const auto path = out_dir / "confusion_all.svg";
        write_text(path, plot::confusion_svg("All classes", plot::aggregate_confusion(report.confusion)));
        written.push_back(path);
    }
    return written;
}

void cmd_run_all(const RunConfig& config) {
    cmd_prepare(config);
    const auto trained = cmd_train(config);
    const auto evaluated = cmd_evaluate(config);
    cmd_plot(trained.history, evaluated.report, config.out_dir);
}

}  // namespace ecg::pipeline
