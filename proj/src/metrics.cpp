#include "chunkfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "chunkfuse/error.hpp"

namespace chunkfuse {
namespace {

// Cumulative (fp, tp) counts after each distinct-score group, highest first.
struct RocCounts {
  std::vector<std::pair<std::size_t, std::size_t>> steps;  // includes (0,0)
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

RocCounts roc_counts(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw DataError(fmt::format("{} scores but {} labels", scores.size(), labels.size()));
  }
  if (scores.empty()) throw DataError("ROC needs at least one sample");
  RocCounts rc;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw DataError(fmt::format("non-finite score at {}", i));
    (labels[i] != 0 ? rc.positives : rc.negatives) += 1;
  }
  if (rc.positives == 0 || rc.negatives == 0) {
    const int present = rc.positives == 0 ? 0 : 1;
    throw DegenerateClassError(
        fmt::format("ROC undefined: every label is {}", present), present);
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  rc.steps.reserve(scores.size() + 1);
  rc.steps.emplace_back(0, 0);
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == threshold; ++i) {
      (labels[order[i]] != 0 ? tp : fp) += 1;
    }
    rc.steps.emplace_back(fp, tp);
  }
  return rc;
}

}  // namespace

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  const auto rc = roc_counts(scores, labels);
  const auto p = static_cast<double>(rc.positives);
  const auto n = static_cast<double>(rc.negatives);
  std::vector<RocPoint> points;
  points.reserve(rc.steps.size());
  for (const auto& [fp, tp] : rc.steps) {
    points.push_back({static_cast<double>(fp) / n, static_cast<double>(tp) / p});
  }
  return points;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  const auto rc = roc_counts(scores, labels);
  // Twice the trapezoid area in count units: sum of dFP * (TP_prev + TP).
  // Exact in integers up to ~2^64.
  unsigned long long twice_area = 0;
  for (std::size_t s = 1; s < rc.steps.size(); ++s) {
    const auto [fp0, tp0] = rc.steps[s - 1];
    const auto [fp1, tp1] = rc.steps[s];
    twice_area += static_cast<unsigned long long>(fp1 - fp0) * (tp0 + tp1);
  }
  return static_cast<double>(twice_area) /
         (2.0 * static_cast<double>(rc.positives) * static_cast<double>(rc.negatives));
}

RocReport macro_auroc(std::span<const ProbabilityVector> predictions, std::span<const int> labels,
                      int num_classes) {
  if (predictions.size() != labels.size()) {
    throw DataError(
        fmt::format("{} predictions but {} labels", predictions.size(), labels.size()));
  }
  if (num_classes < 2) throw ConfigError("macro AUROC needs at least two classes");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw DataError(fmt::format("label {} at {} outside [0, {})", labels[i], i, num_classes));
    }
    if (predictions[i].num_classes() != num_classes) {
      throw ContractError(fmt::format("prediction {} has {} classes, expected {}", i,
                                      predictions[i].num_classes(), num_classes));
    }
  }

  RocReport report;
  report.n_samples = labels.size();
  report.per_class_auc.resize(static_cast<std::size_t>(num_classes));
  report.roc_points.resize(static_cast<std::size_t>(num_classes));

  std::vector<double> scores(labels.size());
  std::vector<int> binary(labels.size());
  double sum = 0.0;
  int used = 0;
  for (int c = 0; c < num_classes; ++c) {
    const auto cu = static_cast<std::size_t>(c);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      scores[i] = predictions[i].probs[cu];
      binary[i] = labels[i] == c ? 1 : 0;
    }
    const auto positives = std::count(binary.begin(), binary.end(), 1);
    if (positives == 0 || positives == static_cast<long>(binary.size())) {
      report.skipped_classes.push_back(c);
      spdlog::warn("class {} has no {} in the evaluation set; excluded from macro AUROC", c,
                   positives == 0 ? "positives" : "negatives");
      continue;
    }
    const double a = auc(scores, binary);
    report.per_class_auc[cu] = a;
    report.roc_points[cu] = roc_curve(scores, binary);
    sum += a;
    ++used;
  }
  if (used == 0) {
    throw MetricUndefinedError("macro AUROC undefined: every class is degenerate");
  }
  report.macro_auc = sum / used;
  return report;
}

nlohmann::json roc_report_to_json(const RocReport& report) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& a : report.per_class_auc) {
    per_class.push_back(a ? nlohmann::json(*a) : nlohmann::json(nullptr));
  }
  nlohmann::json curves = nlohmann::json::array();
  for (const auto& pts : report.roc_points) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : pts) arr.push_back({p.fpr, p.tpr});
    curves.push_back(std::move(arr));
  }
  return {{"per_class_auc", per_class},
          {"macro_auc", report.macro_auc},
          {"n_samples", report.n_samples},
          {"skipped_classes", report.skipped_classes},
          {"roc_points", curves}};
}

void write_roc_csv(const std::filesystem::path& path, std::span<const RocPoint> points) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << "fpr,tpr\n";
  for (const auto& p : points) out << fmt::format("{},{}\n", p.fpr, p.tpr);
  if (!out) throw IoError(fmt::format("write to {} failed", path.string()));
}

}  // namespace chunkfuse
