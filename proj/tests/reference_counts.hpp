#pragma once

// Reference per-class confusion counts on a 2,203-record test fold, and
// a stub predictor that reproduces them.

#include "ecg/evaluation.hpp"

namespace reference_counts {

inline ecg::evaluation::ConfusionCounts counts() {
    ecg::evaluation::ConfusionCounts c;
    // class order CD, HYP, MI, NORM, STTC; fields tn, fp, fn, tp
    c.classes[0] = {1575, 130, 150, 348};
    c.classes[1] = {1843, 97, 131, 132};
    c.classes[2] = {1511, 139, 178, 375};
    c.classes[3] = {1014, 225, 87, 877};
    c.classes[4] = {1501, 179, 115, 408};
    return c;
}

inline constexpr std::size_t kSamples = 2203;

/// Truth labels and probabilities whose 0.5-thresholded confusion equals
/// counts(). Each class column is laid out independently as TP, FN, FP, TN
/// runs; scores are spread so that AUC stays well defined.
struct Replay {
    ecg::LabelMatrix truth;
    ecg::ScoreMatrix probabilities;
};

inline Replay replay() {
    const auto c = counts();
    Replay r;
    r.truth.assign(kSamples, ecg::LabelRow{});
    r.probabilities.assign(kSamples, ecg::ScoreRow{});
    for (std::size_t k = 0; k < ecg::kNumClasses; ++k) {
        const auto& cc = c.classes[k];
        std::size_t i = 0;
        auto fill = [&](std::size_t n, std::uint8_t y, double lo, double hi) {
            for (std::size_t j = 0; j < n; ++j, ++i) {
                r.truth[i][k] = y;
                r.probabilities[i][k] = lo + (hi - lo) * (static_cast<double>(j) + 0.5) / static_cast<double>(n);
            }
        };
        fill(cc.tp, 1, 0.5, 1.0);
        fill(cc.fn, 1, 0.0, 0.5);
        fill(cc.fp, 0, 0.5, 1.0);
        fill(cc.tn, 0, 0.0, 0.5);
    }
    return r;
}

}  // namespace reference_counts
