#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ecg/evaluation.hpp"
#include "ecg/training.hpp"

namespace ecg::plot {

/// Three panels (loss, binary accuracy, validation precision/recall), each
/// with two polylines.
std::string training_curves_svg(const std::vector<training::EpochLog>& history);

/// 2x2 heatmap with rows = actual (0, 1) and columns = predicted (0, 1).
std::string confusion_svg(std::string_view title, const evaluation::ClassConfusion& counts);

/// Element-wise sum of the per-class matrices.
evaluation::ClassConfusion aggregate_confusion(const evaluation::ConfusionCounts& counts);

}  // namespace ecg::plot
