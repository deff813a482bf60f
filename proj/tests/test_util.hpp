#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include "ecg/labels.hpp"
#include "ecg/rng.hpp"
#include "ecg/tensor.hpp"

namespace test_util {

/// Fresh scratch directory under ECG_TEST_TMP (or the system temp dir).
inline std::filesystem::path scratch_dir(const std::string& name) {
    const char* root = std::getenv("ECG_TEST_TMP");
    std::filesystem::path dir = root ? std::filesystem::path(root) : std::filesystem::temp_directory_path() / "ecg_tests";
    dir /= name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline ecg::Tensor3 random_tensor(ecg::Rng& rng, std::size_t b, std::size_t t, std::size_t c, double scale = 1.0) {
    ecg::Tensor3 x(b, t, c);
    for (auto& v : x.values()) v = rng.normal(0.0, scale);
    return x;
}

inline ecg::LabelMatrix random_labels(ecg::Rng& rng, std::size_t n, double p = 0.4) {
    ecg::LabelMatrix labels(n);
    for (auto& row : labels) {
        for (auto& v : row) v = rng.bernoulli(p) ? 1 : 0;
    }
    return labels;
}

inline ecg::LabelRow row_of(std::initializer_list<ecg::DiagClass> classes) {
    ecg::LabelRow r{};
    for (auto c : classes) r[ecg::index_of(c)] = 1;
    return r;
}

}  // namespace test_util
