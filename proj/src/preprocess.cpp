#include "ecg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "ecg/rng.hpp"

namespace ecg::preprocess {

namespace {

// Neumaier-compensated running sum.
struct CompensatedSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double x) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x)) {
            carry += (sum - t) + x;
        } else {
            carry += (x - t) + sum;
        }
        sum = t;
    }
    double value() const { return sum + carry; }
};

struct LeadAccumulator {
    std::vector<CompensatedSum> first;
    std::vector<CompensatedSum> second;
    std::vector<double> lo;
    std::vector<double> hi;

    explicit LeadAccumulator(std::size_t leads)
        : first(leads),
          second(leads),
          lo(leads, std::numeric_limits<double>::infinity()),
          hi(leads, -std::numeric_limits<double>::infinity()) {}
};

template <typename ForEachSample>
NormStats fit_from(std::size_t leads, std::size_t count, ForEachSample&& for_each_sample) {
    if (count == 0) throw Error(ErrorKind::EmptyTrainingSet, "cannot fit normalization on zero samples");
    LeadAccumulator acc(leads);
    std::size_t n_per_lead = 0;
    for_each_sample([&](auto sample) {
        for (std::size_t i = 0; i < sample.size(); ++i) {
            const std::size_t j = i % leads;
            const double v = sample[i];
            acc.first[j].add(v);
            acc.lo[j] = std::min(acc.lo[j], v);
            acc.hi[j] = std::max(acc.hi[j], v);
        }
        n_per_lead += sample.size() / leads;
    });

    NormStats stats;
    stats.mu.resize(leads);
    stats.sigma.resize(leads);
    for (std::size_t j = 0; j < leads; ++j) {
        stats.mu[j] = acc.lo[j] == acc.hi[j] ? acc.lo[j] : acc.first[j].value() / static_cast<double>(n_per_lead);
    }
    for_each_sample([&](auto sample) {
        for (std::size_t i = 0; i < sample.size(); ++i) {
            const std::size_t j = i % leads;
            const double d = sample[i] - stats.mu[j];
            acc.second[j].add(d * d);
        }
    });
    for (std::size_t j = 0; j < leads; ++j) {
        stats.sigma[j] =
            acc.lo[j] == acc.hi[j] ? 0.0 : std::sqrt(acc.second[j].value() / static_cast<double>(n_per_lead));
    }
    return stats;
}

}  // namespace

FoldSplit stratified_split(const dataset::Corpus& corpus) {
    FoldSplit split;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        (corpus[i].strat_fold == dataset::kTestFold ? split.test : split.train).push_back(i);
    }
    return split;
}

BalanceSpec BalanceSpec::defaults(std::uint64_t seed) {
    BalanceSpec spec;
    spec.targets[index_of(DiagClass::HYP)] = kDefaultBalanceTarget;
    spec.targets[index_of(DiagClass::NORM)] = kDefaultBalanceTarget;
    spec.seed = seed;
    return spec;
}

BalancedRows balance(std::span<const std::size_t> train_rows, const LabelMatrix& labels, const BalanceSpec& spec) {
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (spec.targets[c] && *spec.targets[c] < 1) {
            throw Error(ErrorKind::InvalidConfig, "balance target for " + std::string(kClassNames[c]) + " must be >= 1");
        }
    }
    Rng rng(spec.seed);
    BalancedRows out;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        std::vector<std::size_t> members;
        for (auto row : train_rows) {
            if (labels.at(row)[c]) members.push_back(row);
        }
        std::vector<std::size_t> picked;
        if (!spec.targets[c]) {
            picked = std::move(members);
        } else {
            const std::size_t target = *spec.targets[c];
            if (members.empty()) {
                throw Error(ErrorKind::EmptyClass, std::string(kClassNames[c]) + " has no training rows to resample");
            }
            if (target > members.size()) {
                // Every member is kept once; the shortfall is drawn with replacement.
                picked = members;
                picked.reserve(target);
                while (picked.size() < target) picked.push_back(members[rng.index(members.size())]);
            } else if (target < members.size()) {
                // Partial Fisher-Yates: the first `target` slots form the sample.
                for (std::size_t k = 0; k < target; ++k) {
                    const std::size_t j = k + rng.index(members.size() - k);
                    std::swap(members[k], members[j]);
                }
                picked.assign(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(target));
            } else {
                picked = std::move(members);
            }
        }
        out.contributions[c] = picked.size();
        out.rows.insert(out.rows.end(), picked.begin(), picked.end());
    }
    return out;
}

NormStats fit_norm_stats(const SignalBatch& train) {
    return fit_from(train.channels(), train.batch(), [&](auto&& visit) {
        for (std::size_t b = 0; b < train.batch(); ++b) visit(train.sample(b));
    });
}

NormStats fit_norm_stats(const dataset::Corpus& corpus, std::span<const std::size_t> rows) {
    return fit_from(corpus.leads(), rows.size(), [&](auto&& visit) {
        for (auto r : rows) visit(std::span<const float>(corpus[r].signal));
    });
}

void apply_norm_inplace(SignalBatch& signals, const NormStats& stats) {
    const std::size_t leads = signals.channels();
    if (stats.mu.size() != leads || stats.sigma.size() != leads) {
        throw Error(ErrorKind::LeadCountMismatch, "stats cover " + std::to_string(stats.mu.size()) +
                                                      " leads, batch has " + std::to_string(leads));
    }
    std::vector<double> denom(leads);
    for (std::size_t j = 0; j < leads; ++j) denom[j] = stats.sigma[j] + stats.epsilon;
    auto v = signals.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::size_t j = i % leads;
        v[i] = (v[i] - stats.mu[j]) / denom[j];
    }
}

SignalBatch apply_norm(const SignalBatch& signals, const NormStats& stats) {
    SignalBatch out = signals;
    apply_norm_inplace(out, stats);
    return out;
}

ClassWeights compute_class_weights(const LabelMatrix& balanced_labels, double hyp_multiplier) {
    if (!(hyp_multiplier > 0.0) || !std::isfinite(hyp_multiplier)) {
        throw Error(ErrorKind::InvalidConfig, "hyp_multiplier must be positive");
    }
    const auto counts = dataset::class_counts(balanced_labels);
    const double n_total = static_cast<double>(balanced_labels.size());
    const double n_classes = static_cast<double>(kNumClasses);
    ClassWeights w;
    w.hyp_multiplier = hyp_multiplier;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (counts[c] == 0) {
            throw Error(ErrorKind::ZeroClassCount, std::string(kClassNames[c]) + " has no positive rows");
        }
        w.base[c] = n_total / (n_classes * static_cast<double>(counts[c]));
        w.final[c] = w.base[c];
    }
    w.final[index_of(DiagClass::HYP)] = w.base[index_of(DiagClass::HYP)] * hyp_multiplier;
    return w;
}

std::vector<double> sample_weights(const LabelMatrix& labels, const ClassWeights& weights) {
    std::vector<double> out;
    out.reserve(labels.size());
    for (const auto& row : labels) {
        double sum = 0.0;
        int n = 0;
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            if (row[c]) {
                sum += weights.final[c];
                ++n;
            }
        }
        out.push_back(n == 0 ? 1.0 : sum / n);
    }
    return out;
}

SplitSet make_split_set(std::span<const std::size_t> balanced_rows, std::span<const std::size_t> test_rows,
                        double validation_fraction, std::uint64_t seed) {
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
        throw Error(ErrorKind::InvalidConfig, "validation_fraction must lie in (0,1)");
    }
    std::vector<std::size_t> order(balanced_rows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order.begin(), order.end());

    const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(order.size()) * validation_fraction));
    const std::size_t n_train = order.size() - n_val;
    SplitSet s;
    s.train_positions.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.validation_positions.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    for (auto p : s.train_positions) s.train.push_back(balanced_rows[p]);
    for (auto p : s.validation_positions) s.validation.push_back(balanced_rows[p]);
    s.test.assign(test_rows.begin(), test_rows.end());
    return s;
}

std::string norm_stats_to_json(const NormStats& stats) {
    nlohmann::json j;
    j["mu"] = stats.mu;
    j["sigma"] = stats.sigma;
    j["epsilon"] = stats.epsilon;
    return j.dump(2) + "\n";
}

NormStats norm_stats_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        NormStats s;
        s.mu = j.at("mu").get<std::vector<double>>();
        s.sigma = j.at("sigma").get<std::vector<double>>();
        s.epsilon = j.at("epsilon").get<double>();
        if (s.mu.size() != s.sigma.size()) throw Error(ErrorKind::MalformedInput, "mu and sigma lengths differ");
        if (!(s.epsilon > 0.0)) throw Error(ErrorKind::MalformedInput, "epsilon must be positive");
        for (double v : s.sigma) {
            if (!(v >= 0.0)) throw Error(ErrorKind::MalformedInput, "sigma entries must be non-negative");
        }
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::MalformedInput, std::string("normalization stats: ") + e.what());
    }
}

std::string class_weights_to_json(const ClassWeights& weights) {
    nlohmann::json j;
    nlohmann::json base, fin;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        base[std::string(kClassNames[c])] = weights.base[c];
        fin[std::string(kClassNames[c])] = weights.final[c];
    }
    j["base"] = base;
    j["final"] = fin;
    j["hyp_multiplier"] = weights.hyp_multiplier;
    return j.dump(2) + "\n";
}

ClassWeights class_weights_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        ClassWeights w;
        w.hyp_multiplier = j.at("hyp_multiplier").get<double>();
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            const std::string name(kClassNames[c]);
            w.base[c] = j.at("base").at(name).get<double>();
            w.final[c] = j.at("final").at(name).get<double>();
        }
        return w;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::MalformedInput, std::string("class weights: ") + e.what());
    }
}

}  // namespace ecg::preprocess
