#include "ecg/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "ecg/error.hpp"

namespace ecg::evaluation {

namespace {

void require_same_shape(const LabelMatrix& a, const LabelMatrix& b) {
    if (a.size() != b.size()) {
        throw Error(ErrorKind::ShapeMismatch, "prediction has " + std::to_string(a.size()) + " rows, truth has " +
                                                  std::to_string(b.size()));
    }
}

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace

LabelMatrix binarize(const ScoreMatrix& probabilities, double threshold) {
    LabelMatrix out(probabilities.size());
    for (std::size_t i = 0; i < probabilities.size(); ++i) {
        for (std::size_t c = 0; c < kNumClasses; ++c) out[i][c] = probabilities[i][c] >= threshold ? 1 : 0;
    }
    return out;
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        classes[c].tn += other.classes[c].tn;
        classes[c].fp += other.classes[c].fp;
        classes[c].fn += other.classes[c].fn;
        classes[c].tp += other.classes[c].tp;
    }
    return *this;
}

ConfusionCounts confusion(const LabelMatrix& pred, const LabelMatrix& truth) {
    require_same_shape(pred, truth);
    ConfusionCounts out;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            auto& cc = out.classes[c];
            const bool p = pred[i][c] != 0, t = truth[i][c] != 0;
            if (p && t) {
                ++cc.tp;
            } else if (p) {
                ++cc.fp;
            } else if (t) {
                ++cc.fn;
            } else {
                ++cc.tn;
            }
        }
    }
    return out;
}

PerClassMetrics per_class_metrics(const ConfusionCounts& counts) {
    PerClassMetrics out{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& cc = counts.classes[c];
        auto& m = out[c];
        m.precision = ratio(double(cc.tp), double(cc.tp + cc.fp));
        m.recall = ratio(double(cc.tp), double(cc.tp + cc.fn));
        m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
        m.support = cc.tp + cc.fn;
    }
    return out;
}

AggregateMetrics aggregate_metrics(const ConfusionCounts& counts, const PerClassMetrics& per_class) {
    AggregateMetrics a;
    double tp = 0, fp = 0, fn = 0;
    double support = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& cc = counts.classes[c];
        tp += double(cc.tp);
        fp += double(cc.fp);
        fn += double(cc.fn);
        const auto& m = per_class[c];
        const double s = double(m.support);
        support += s;
        a.weighted_precision += s * m.precision;
        a.weighted_recall += s * m.recall;
        a.weighted_f1 += s * m.f1;
        a.macro_precision += m.precision;
        a.macro_recall += m.recall;
        a.macro_f1 += m.f1;
    }
    a.micro_precision = ratio(tp, tp + fp);
    a.micro_recall = ratio(tp, tp + fn);
    a.micro_f1 = ratio(2.0 * a.micro_precision * a.micro_recall, a.micro_precision + a.micro_recall);
    a.macro_precision /= double(kNumClasses);
    a.macro_recall /= double(kNumClasses);
    a.macro_f1 /= double(kNumClasses);
    a.weighted_precision = ratio(a.weighted_precision, support);
    a.weighted_recall = ratio(a.weighted_recall, support);
    a.weighted_f1 = ratio(a.weighted_f1, support);
    const double elements = double(counts.samples()) * double(kNumClasses);
    a.hamming_loss = ratio(fp + fn, elements);
    a.binary_accuracy = 1.0 - a.hamming_loss;
    return a;
}

double subset_accuracy(const LabelMatrix& pred, const LabelMatrix& truth) {
    require_same_shape(pred, truth);
    if (pred.empty()) return 0.0;
    std::size_t exact = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) exact += pred[i] == truth[i];
    return double(exact) / double(pred.size());
}

std::optional<double> roc_auc_single(std::span<const double> scores, std::span<const std::uint8_t> truth) {
    if (scores.size() != truth.size()) throw Error(ErrorKind::ShapeMismatch, "scores and truth lengths differ");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    const auto positives = static_cast<std::size_t>(std::count_if(truth.begin(), truth.end(), [](auto v) { return v != 0; }));
    const std::size_t negatives = truth.size() - positives;
    if (positives == 0 || negatives == 0) return std::nullopt;

    // Walk thresholds from high to low; each tie group adds one ROC vertex.
    // Twice the area is accumulated in integers: dFP * (2*TP_prev + dTP).
    unsigned long long twice_area = 0;
    std::size_t tp = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::size_t dtp = 0, dfp = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (truth[order[j]] ? dtp : dfp) += 1;
            ++j;
        }
        twice_area += static_cast<unsigned long long>(dfp) * (2ULL * tp + dtp);
        tp += dtp;
        i = j;
    }
    return static_cast<double>(twice_area) / (2.0 * double(positives) * double(negatives));
}

AucResult roc_auc(const ScoreMatrix& scores, const LabelMatrix& truth) {
    if (scores.size() != truth.size()) throw Error(ErrorKind::ShapeMismatch, "scores and truth row counts differ");
    AucResult out;
    std::vector<double> s(scores.size());
    std::vector<std::uint8_t> t(scores.size());
    double sum = 0.0;
    int defined = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        for (std::size_t i = 0; i < scores.size(); ++i) {
            s[i] = scores[i][c];
            t[i] = truth[i][c];
        }
        out.per_class[c] = roc_auc_single(s, t);
        if (out.per_class[c]) {
            sum += *out.per_class[c];
            ++defined;
        } else {
            out.undefined.push_back(kAllClasses[c]);
        }
    }
    if (defined > 0) out.macro = sum / defined;
    return out;
}

EvaluationReport report_from_counts(const ConfusionCounts& counts, double threshold) {
    EvaluationReport r;
    r.threshold = threshold;
    r.samples = counts.samples();
    r.confusion = counts;
    r.per_class = per_class_metrics(counts);
    r.aggregate = aggregate_metrics(counts, r.per_class);
    r.auc.undefined.assign(kAllClasses.begin(), kAllClasses.end());
    return r;
}

EvaluationReport evaluate(const ScoreMatrix& probabilities, const LabelMatrix& truth, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorKind::InvalidConfig, "threshold must lie in (0,1)");
    const auto pred = binarize(probabilities, threshold);
    EvaluationReport r = report_from_counts(confusion(pred, truth), threshold);
    r.samples = truth.size();
    r.subset_accuracy = subset_accuracy(pred, truth);
    r.auc = roc_auc(probabilities, truth);
    return r;
}

std::string report_to_json(const EvaluationReport& r) {
    using nlohmann::json;
    json j;
    j["threshold"] = r.threshold;
    j["samples"] = r.samples;
    json classes = json::object();
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& cc = r.confusion.classes[c];
        const auto& m = r.per_class[c];
        json block;
        block["tn"] = cc.tn;
        block["fp"] = cc.fp;
        block["fn"] = cc.fn;
        block["tp"] = cc.tp;
        block["precision"] = m.precision;
        block["recall"] = m.recall;
        block["f1"] = m.f1;
        block["support"] = m.support;
        block["auc"] = r.auc.per_class[c] ? json(*r.auc.per_class[c]) : json(nullptr);
        classes[std::string(kClassNames[c])] = block;
    }
    j["per_class"] = classes;
    const auto& a = r.aggregate;
    j["micro_precision"] = a.micro_precision;
    j["micro_recall"] = a.micro_recall;
    j["micro_f1"] = a.micro_f1;
    j["macro_precision"] = a.macro_precision;
    j["macro_recall"] = a.macro_recall;
    j["macro_f1"] = a.macro_f1;
    j["weighted_precision"] = a.weighted_precision;
    j["weighted_recall"] = a.weighted_recall;
    j["weighted_f1"] = a.weighted_f1;
    j["hamming_loss"] = a.hamming_loss;
    j["binary_accuracy"] = a.binary_accuracy;
    j["subset_accuracy"] = r.subset_accuracy;
    j["macro_auc"] = r.auc.macro ? json(*r.auc.macro) : json(nullptr);
    json undefined = json::array();
    for (auto c : r.auc.undefined) undefined.push_back(std::string(name_of(c)));
    j["auc_undefined_classes"] = undefined;
    j["loss"] = r.loss ? json(*r.loss) : json(nullptr);
    return j.dump(2) + "\n";
}

EvaluationReport report_from_json(const std::string& text) {
    using nlohmann::json;
    try {
        const auto j = json::parse(text);
        EvaluationReport r;
        r.threshold = j.at("threshold").get<double>();
        r.samples = j.at("samples").get<std::size_t>();
        const auto& classes = j.at("per_class");
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            const auto& b = classes.at(std::string(kClassNames[c]));
            auto& cc = r.confusion.classes[c];
            cc.tn = b.at("tn").get<std::size_t>();
            cc.fp = b.at("fp").get<std::size_t>();
            cc.fn = b.at("fn").get<std::size_t>();
            cc.tp = b.at("tp").get<std::size_t>();
            auto& m = r.per_class[c];
            m.precision = b.at("precision").get<double>();
            m.recall = b.at("recall").get<double>();
            m.f1 = b.at("f1").get<double>();
            m.support = b.at("support").get<std::size_t>();
            if (!b.at("auc").is_null()) r.auc.per_class[c] = b.at("auc").get<double>();
        }
        for (std::size_t c = 1; c < kNumClasses; ++c) {
            if (r.confusion.classes[c].total() != r.confusion.classes[0].total()) {
                throw Error(ErrorKind::MalformedInput, "confusion totals differ between classes");
            }
        }
        auto& a = r.aggregate;
        a.micro_precision = j.at("micro_precision").get<double>();
        a.micro_recall = j.at("micro_recall").get<double>();
        a.micro_f1 = j.at("micro_f1").get<double>();
        a.macro_precision = j.at("macro_precision").get<double>();
        a.macro_recall = j.at("macro_recall").get<double>();
        a.macro_f1 = j.at("macro_f1").get<double>();
        a.weighted_precision = j.at("weighted_precision").get<double>();
        a.weighted_recall = j.at("weighted_recall").get<double>();
        a.weighted_f1 = j.at("weighted_f1").get<double>();
        a.hamming_loss = j.at("hamming_loss").get<double>();
        a.binary_accuracy = j.at("binary_accuracy").get<double>();
        r.subset_accuracy = j.at("subset_accuracy").get<double>();
        if (!j.at("macro_auc").is_null()) r.auc.macro = j.at("macro_auc").get<double>();
        for (const auto& name : j.at("auc_undefined_classes")) {
            const auto c = parse_class(name.get<std::string>());
            if (!c) throw Error(ErrorKind::MalformedInput, "unknown class in auc_undefined_classes");
            r.auc.undefined.push_back(*c);
        }
        if (j.contains("loss") && !j.at("loss").is_null()) r.loss = j.at("loss").get<double>();
        return r;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedInput, std::string("evaluation report: ") + e.what());
    }
}

std::string confusion_to_csv(const ConfusionCounts& counts) {
    std::string out = "class,tn,fp,fn,tp\n";
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& cc = counts.classes[c];
        out += std::string(kClassNames[c]) + ',' + std::to_string(cc.tn) + ',' + std::to_string(cc.fp) + ',' +
               std::to_string(cc.fn) + ',' + std::to_string(cc.tp) + '\n';
    }
    return out;
}

std::string per_class_to_csv(const PerClassMetrics& metrics) {
    std::string out = "class,precision,recall,f1,support\n";
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto& m = metrics[c];
        out += std::string(kClassNames[c]) + ',' + format_double(m.precision) + ',' + format_double(m.recall) + ',' +
               format_double(m.f1) + ',' + std::to_string(m.support) + '\n';
    }
    return out;
}

}  // namespace ecg::evaluation
