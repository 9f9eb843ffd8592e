#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "chunkfuse/scoring.hpp"

namespace chunkfuse {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  bool operator==(const RocPoint&) const = default;
};

// ROC points for thresholds swept over the distinct scores in descending
// order, starting at (0,0) and ending at (1,1). labels are 0/1 (any nonzero
// value counts as positive). Throws DegenerateClassError when only one class
// is present and DataError on length mismatch or non-finite scores.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

// Trapezoidal area under roc_curve. Tied scores contribute a diagonal
// segment, which is the same as half credit per tied positive/negative pair.
double auc(std::span<const double> scores, std::span<const int> labels);

struct RocReport {
  // nullopt for skipped classes.
  std::vector<std::optional<double>> per_class_auc;
  double macro_auc = 0.0;
  std::vector<std::vector<RocPoint>> roc_points;  // empty for skipped classes
  std::size_t n_samples = 0;
  std::vector<int> skipped_classes;
};

// One-vs-rest AUC per class using component c as the score, averaged over the
// classes that have both positives and negatives. Throws
// MetricUndefinedError when every class is degenerate.
RocReport macro_auroc(std::span<const ProbabilityVector> predictions, std::span<const int> labels,
                      int num_classes);

nlohmann::json roc_report_to_json(const RocReport& report);
void write_roc_csv(const std::filesystem::path& path, std::span<const RocPoint> points);

}  // namespace chunkfuse
