#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "ecg/error.hpp"
#include "ecg/preprocess.hpp"
#include "test_util.hpp"

using namespace ecg;
using namespace ecg::preprocess;
using test_util::row_of;

namespace {

dataset::Corpus tiny_corpus(const std::vector<int>& folds, std::size_t time = 4, std::size_t leads = 2) {
    std::vector<dataset::ECGRecord> records;
    for (std::size_t i = 0; i < folds.size(); ++i) {
        dataset::ECGRecord r;
        r.record_id = "r" + std::to_string(i);
        r.strat_fold = folds[i];
        r.signal.assign(time * leads, static_cast<float>(i));
        records.push_back(std::move(r));
    }
    return dataset::Corpus(std::move(records), time, leads);
}

// Label matrix with the given number of rows carrying each single class.
LabelMatrix single_label_rows(const std::array<std::size_t, kNumClasses>& per_class) {
    LabelMatrix labels;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        for (std::size_t k = 0; k < per_class[c]; ++k) {
            LabelRow r{};
            r[c] = 1;
            labels.push_back(r);
        }
    }
    return labels;
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    return rows;
}

}  // namespace

TEST_CASE("stratified split by fold") {
    const auto split = stratified_split(tiny_corpus({1, 10, 5}));
    CHECK(split.train == std::vector<std::size_t>{0, 2});
    CHECK(split.test == std::vector<std::size_t>{1});
    const auto all_test = stratified_split(tiny_corpus({10, 10}));
    CHECK(all_test.train.empty());
    CHECK(all_test.test.size() == 2);
}

TEST_CASE("default balancing hits the HYP and NORM targets") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 20 + rng.index(300);
        auto labels = test_util::random_labels(rng, n, 0.3);
        labels[0][index_of(DiagClass::HYP)] = 1;
        labels[1][index_of(DiagClass::NORM)] = 1;
        const auto rows = all_rows(n);
        const auto spec = BalanceSpec::defaults(rng.next_u64());
        const auto b = balance(rows, labels, spec);
        CHECK(b.contributions[index_of(DiagClass::HYP)] == 4000);
        CHECK(b.contributions[index_of(DiagClass::NORM)] == 4000);
        const auto counts = dataset::class_counts(labels);
        for (auto c : {DiagClass::CD, DiagClass::MI, DiagClass::STTC}) CHECK(b.contributions[index_of(c)] == counts[index_of(c)]);
        std::size_t total = 0;
        for (auto v : b.contributions) total += v;
        CHECK(b.rows.size() == total);

        // The HYP block holds only HYP rows, and so on for each class.
        std::size_t offset = 0;
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            for (std::size_t k = 0; k < b.contributions[c]; ++k) CHECK(labels[b.rows[offset + k]][c] == 1);
            offset += b.contributions[c];
        }
    }
}

TEST_CASE("balancing is deterministic and seed changes keep the sizes") {
    Rng rng(3);
    const auto labels = test_util::random_labels(rng, 200, 0.3);
    const auto rows = all_rows(200);
    BalanceSpec spec = BalanceSpec::defaults(5);
    spec.targets[index_of(DiagClass::HYP)] = 70;
    spec.targets[index_of(DiagClass::NORM)] = 20;
    const auto a = balance(rows, labels, spec);
    const auto b = balance(rows, labels, spec);
    CHECK(a.rows == b.rows);
    spec.seed = 6;
    const auto c = balance(rows, labels, spec);
    CHECK(c.contributions == a.contributions);
    CHECK(c.rows != a.rows);
}

TEST_CASE("downsampling draws without replacement") {
    const auto labels = single_label_rows({0, 0, 0, 50, 0});
    BalanceSpec spec;
    spec.targets[index_of(DiagClass::NORM)] = 30;
    const auto b = balance(all_rows(50), labels, spec);
    REQUIRE(b.rows.size() == 30);
    CHECK(std::set<std::size_t>(b.rows.begin(), b.rows.end()).size() == 30);
}

TEST_CASE("oversampling three rows to nine covers every original") {
    // Exhaustive over seeds: every draw of the seeded sampler must include each row.
    const auto labels = single_label_rows({0, 3, 0, 0, 0});
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        BalanceSpec spec;
        spec.targets[index_of(DiagClass::HYP)] = 9;
        spec.seed = seed;
        const auto b = balance(all_rows(3), labels, spec);
        REQUIRE(b.rows.size() == 9);
        std::map<std::size_t, int> seen;
        for (auto r : b.rows) ++seen[r];
        CAPTURE(seed);
        CHECK(seen.size() == 3);
    }
}

TEST_CASE("balancing without targets concatenates per-class lists") {
    const auto labels = single_label_rows({2, 1, 3, 1, 2});
    const auto rows = all_rows(labels.size());
    const auto b = balance(rows, labels, BalanceSpec{});
    CHECK(b.rows == rows);

    LabelMatrix multi = {row_of({DiagClass::CD, DiagClass::MI}), row_of({DiagClass::MI})};
    const auto m = balance(all_rows(2), multi, BalanceSpec{});
    CHECK(m.rows == std::vector<std::size_t>{0, 0, 1});
}

TEST_CASE("balancing errors") {
    const auto labels = single_label_rows({2, 0, 3, 1, 2});
    try {
        balance(all_rows(labels.size()), labels, BalanceSpec::defaults());
        FAIL("expected EmptyClass");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::EmptyClass);
    }
    BalanceSpec zero;
    zero.targets[0] = 0;
    CHECK_THROWS_AS(balance(all_rows(labels.size()), labels, zero), Error);
}

TEST_CASE("normalization statistics by hand") {
    SignalBatch constant(1, 4, 1, 1.0);
    auto s = fit_norm_stats(constant);
    CHECK(s.mu[0] == 1.0);
    CHECK(s.sigma[0] == 0.0);
    const auto normalized = apply_norm(constant, s);
    for (double v : normalized.values()) CHECK(v == 0.0);

    SignalBatch two(2, 1, 1);
    two.at(0, 0, 0) = 0.0;
    two.at(1, 0, 0) = 2.0;
    s = fit_norm_stats(two);
    CHECK(s.mu[0] == 1.0);
    CHECK(s.sigma[0] == 1.0);
    CHECK(s.epsilon == 1e-8);

    SignalBatch three(1, 1, 1, 3.0);
    CHECK(apply_norm(three, s).at(0, 0, 0) == doctest::Approx(2.0 / (1.0 + 1e-8)).epsilon(1e-15));
    CHECK(apply_norm(three, s).at(0, 0, 0) == 2.0 / (1.0 + 1e-8));

    CHECK_THROWS_AS(fit_norm_stats(SignalBatch(0, 4, 2)), Error);
    try {
        apply_norm(SignalBatch(1, 2, 3), s);
        FAIL("expected LeadCountMismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::LeadCountMismatch);
    }
}

TEST_CASE("normalization is not idempotent for a shifted lead") {
    Rng rng(2);
    auto x = test_util::random_tensor(rng, 3, 20, 1, 2.0);
    for (auto& v : x.values()) v += 5.0;
    const auto s = fit_norm_stats(x);
    const auto once = apply_norm(x, s);
    const auto twice = apply_norm(once, s);
    CHECK(once.values()[0] != twice.values()[0]);
}

TEST_CASE("fit then apply gives zero mean and unit spread") {
    Rng rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t b = 1 + rng.index(6), t = 2 + rng.index(60), leads = 1 + rng.index(12);
        SignalBatch x(b, t, leads);
        std::vector<double> scale(leads), offset(leads);
        std::vector<bool> constant(leads);
        for (std::size_t j = 0; j < leads; ++j) {
            scale[j] = std::pow(10.0, rng.uniform(-1.5, 2.0));
            offset[j] = rng.normal(0.0, 50.0);
            constant[j] = rng.bernoulli(0.2);
        }
        for (std::size_t n = 0; n < b; ++n) {
            for (std::size_t k = 0; k < t; ++k) {
                for (std::size_t j = 0; j < leads; ++j) {
                    x.at(n, k, j) = constant[j] ? offset[j] : offset[j] + scale[j] * rng.normal();
                }
            }
        }
        const auto stats = fit_norm_stats(x);
        const auto y = apply_norm(x, stats);
        for (std::size_t j = 0; j < leads; ++j) {
            double m = 0.0, v = 0.0;
            for (std::size_t i = j; i < y.size(); i += leads) m += y.values()[i];
            m /= double(b * t);
            for (std::size_t i = j; i < y.size(); i += leads) v += std::pow(y.values()[i] - m, 2);
            const double sd = std::sqrt(v / double(b * t));
            if (constant[j]) {
                for (std::size_t i = j; i < y.size(); i += leads) CHECK(y.values()[i] == 0.0);
            } else {
                CHECK(std::abs(m) <= 1e-6);
                CHECK(std::abs(sd - 1.0) <= 1e-6);
            }
        }
    }
}

TEST_CASE("corpus and tensor fits agree") {
    const auto corpus = dataset::generate_synthetic(6, 4, {0.2, 0.2, 0.2, 0.4, 0.2});
    const std::vector<std::size_t> rows = {0, 2, 2, 5};
    const auto a = fit_norm_stats(corpus, rows);
    const auto b = fit_norm_stats(dataset::gather_signals(corpus, rows));
    CHECK(a == b);
}

TEST_CASE("class weights") {
    auto uniform = single_label_rows({2, 2, 2, 2, 2});
    auto w = compute_class_weights(uniform);
    for (std::size_t c = 0; c < kNumClasses; ++c) CHECK(w.base[c] == 1.0);
    CHECK(w.final[index_of(DiagClass::HYP)] == 1.5);

    auto labels = single_label_rows({4, 2, 4, 8, 2});
    w = compute_class_weights(labels, 1.5);
    CHECK(w.base == std::array<double, kNumClasses>{1.0, 2.0, 1.0, 0.5, 2.0});
    CHECK(w.final == std::array<double, kNumClasses>{1.0, 3.0, 1.0, 0.5, 2.0});

    Rng rng(4);
    rng.shuffle(labels.begin(), labels.end());
    CHECK(compute_class_weights(labels, 1.5).final == w.final);

    try {
        compute_class_weights(single_label_rows({1, 1, 0, 1, 1}));
        FAIL("expected ZeroClassCount");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ZeroClassCount);
    }
}

TEST_CASE("sample weights average over positive labels") {
    ClassWeights w;
    w.final = {0.5240, 0.9716, 0.4900, 1.0031, 0.4806};
    const LabelMatrix rows = {row_of({DiagClass::HYP}), row_of({DiagClass::CD, DiagClass::MI}), LabelRow{}};
    const auto s = sample_weights(rows, w);
    CHECK(s[0] == 0.9716);
    CHECK(s[1] == doctest::Approx(0.5070).epsilon(1e-12));
    CHECK(s[2] == 1.0);

    const auto equal = single_label_rows({3, 3, 3, 3, 3});
    const auto ew = sample_weights(equal, compute_class_weights(equal, 1.0));
    for (double v : ew) CHECK(v == ew[0]);
}

TEST_CASE("validation split holds out the last fifth of a shuffle") {
    std::vector<std::size_t> balanced;
    for (std::size_t i = 0; i < 22069; ++i) balanced.push_back(i % 5000);
    const std::vector<std::size_t> test = {9, 10};
    const auto s = make_split_set(balanced, test, 0.2, 3);
    CHECK(s.validation.size() == 4413);
    CHECK(s.train.size() == 22069 - 4413);
    CHECK(s.test == test);
    std::set<std::size_t> positions(s.train_positions.begin(), s.train_positions.end());
    for (auto p : s.validation_positions) CHECK(positions.count(p) == 0);
    positions.insert(s.validation_positions.begin(), s.validation_positions.end());
    CHECK(positions.size() == 22069);
    for (std::size_t i = 0; i < s.train.size(); ++i) CHECK(s.train[i] == balanced[s.train_positions[i]]);
    CHECK(make_split_set(balanced, test, 0.2, 3).validation == s.validation);
    CHECK_THROWS_AS(make_split_set(balanced, test, 1.0, 3), Error);
}

TEST_CASE("stats and weights survive JSON") {
    NormStats s{{1.0, -2.5, 1e-300}, {0.1, 0.0, 3.0}, 1e-8};
    CHECK(norm_stats_from_json(norm_stats_to_json(s)) == s);
    const auto text = norm_stats_to_json(s);
    CHECK(text.find("\"mu\"") != std::string::npos);
    CHECK(text.find("\"sigma\"") != std::string::npos);
    CHECK(text.find("\"epsilon\"") != std::string::npos);
    CHECK_THROWS_AS(norm_stats_from_json("{\"mu\": [1]}"), Error);
    CHECK_THROWS_AS(norm_stats_from_json("{\"mu\": [1], \"sigma\": [-1], \"epsilon\": 1e-8}"), Error);

    const auto w = compute_class_weights(single_label_rows({4, 2, 4, 8, 2}));
    const auto back = class_weights_from_json(class_weights_to_json(w));
    CHECK(back.base == w.base);
    CHECK(back.final == w.final);
    CHECK(back.hyp_multiplier == w.hyp_multiplier);
}
