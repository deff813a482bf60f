#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace ecg {

// Diagnostic superclasses in canonical (alphabetical) index order.
enum class DiagClass : std::uint8_t { CD = 0, HYP = 1, MI = 2, NORM = 3, STTC = 4 };

inline constexpr std::size_t kNumClasses = 5;

inline constexpr std::array<DiagClass, kNumClasses> kAllClasses = {
    DiagClass::CD, DiagClass::HYP, DiagClass::MI, DiagClass::NORM, DiagClass::STTC};

inline constexpr std::array<std::string_view, kNumClasses> kClassNames = {"CD", "HYP", "MI", "NORM",
                                                                         "STTC"};

constexpr std::size_t index_of(DiagClass c) { return static_cast<std::size_t>(c); }

constexpr std::string_view name_of(DiagClass c) { return kClassNames[index_of(c)]; }

inline std::optional<DiagClass> parse_class(std::string_view name) {
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        if (kClassNames[i] == name) return kAllClasses[i];
    }
    return std::nullopt;
}

// One multi-hot label vector; entries are 0 or 1.
using LabelRow = std::array<std::uint8_t, kNumClasses>;
using LabelMatrix = std::vector<LabelRow>;

// One row of per-class scores (probabilities or binarized predictions).
using ScoreRow = std::array<double, kNumClasses>;
using ScoreMatrix = std::vector<ScoreRow>;

using ClassCounts = std::array<std::size_t, kNumClasses>;

inline int positive_count(const LabelRow& row) {
    int n = 0;
    for (auto v : row) n += v != 0;
    return n;
}

}  // namespace ecg
