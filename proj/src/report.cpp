#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "chunkfuse/csv.hpp"
#include "chunkfuse/experiment.hpp"

namespace chunkfuse {
namespace {

std::string category_label(Method method, bool with_overlap) {
  std::string label;
  switch (method) {
    case Method::Baseline: label = "Baseline"; break;
    case Method::Ensemble: label = "Ensemble"; break;
    case Method::Aggregation: label = "Aggregation"; break;
    case Method::EnsembleAggregation: label = "Ensemble + Aggregation"; break;
  }
  if (with_overlap && method_aggregates(method)) label += " (with overlap)";
  return label;
}

std::string task_column(const TaskSpec& task) {
  return task.kind == TaskKind::Mortality ? "Mortality Prediction" : "Length of Stay Prediction";
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

std::string percent(double fraction) { return fmt::format("{:.2f}", 100.0 * fraction); }

std::string md_cell(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (c == '|') {
      out += "\\|";
    } else if (c == '\n') {
      out += ' ';
    } else {
      out += c;
    }
  }
  return out;
}

std::string render_markdown(const ComparisonReport& report) {
  std::string md = "# Comparison report\n\n";
  md += fmt::format("Task: {} ({} classes). Seed: {}. Notes: {} train, {} validation, {} test.\n",
                    task_name(report.task.kind), report.task.num_classes, report.seed,
                    report.n_train, report.n_validation, report.n_test);

  std::vector<std::size_t> overlaps;
  for (const auto& row : report.rows) {
    if (std::find(overlaps.begin(), overlaps.end(), row.overlap) == overlaps.end()) {
      overlaps.push_back(row.overlap);
    }
  }
  for (std::size_t overlap : overlaps) {
    md += overlap > 0 ? fmt::format("\n## With overlap ({} tokens)\n\n", overlap)
                      : std::string("\n## Without overlap\n\n");
    md += fmt::format("| Category | Architecture | {} |\n", task_column(report.task));
    md += "|---|---|---:|\n";
    std::optional<Method> previous;
    for (const auto& row : report.rows) {
      if (row.overlap != overlap) continue;
      const std::string category =
          previous == row.method ? std::string() : category_label(row.method, overlap > 0);
      previous = row.method;
      const std::string value =
          row.error ? "error: " + md_cell(*row.error) : percent(row.macro_auroc.value_or(0.0));
      md += fmt::format("| {} | {} | {} |\n", category, md_cell(join(row.scorer_ids, " + ")), value);
    }
  }
  md += "\nValues are macro-averaged AUROC (%) on the test split.\n";
  return md;
}

std::string render_csv(const ComparisonReport& report) {
  std::ostringstream out;
  csv::write_row(out, {"method", "scorers", "overlap", "macro_auroc_percent", "error"});
  for (const auto& row : report.rows) {
    csv::write_row(out, {std::string(method_name(row.method)), join(row.scorer_ids, "+"),
                         std::to_string(row.overlap),
                         row.macro_auroc ? percent(*row.macro_auroc) : std::string(),
                         row.error.value_or("")});
  }
  return out.str();
}

}  // namespace

bool ComparisonReport::has_errors() const {
  return std::any_of(rows.begin(), rows.end(), [](const ReportRow& r) { return r.error.has_value(); });
}

ExitCode ComparisonReport::exit_code() const {
  for (const auto& r : rows) {
    if (r.error) return r.error_code == ExitCode::kOk ? ExitCode::kScorer : r.error_code;
  }
  return ExitCode::kOk;
}

nlohmann::json report_to_json(const ComparisonReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.rows) {
    nlohmann::json per_class = nlohmann::json::array();
    for (const auto& a : row.per_class_auc) per_class.push_back(a ? nlohmann::json(*a) : nlohmann::json(nullptr));
    nlohmann::json j = {{"method", method_name(row.method)},
                        {"scorers", row.scorer_ids},
                        {"overlap", row.overlap},
                        {"with_overlap", row.with_overlap()},
                        {"macro_auroc", row.macro_auroc ? nlohmann::json(*row.macro_auroc) : nlohmann::json(nullptr)},
                        {"macro_auroc_percent",
                         row.macro_auroc ? nlohmann::json(percent(*row.macro_auroc)) : nlohmann::json(nullptr)},
                        {"per_class_auc", per_class},
                        {"skipped_classes", row.skipped_classes}};
    if (row.error) {
      j["error"] = *row.error;
      j["exit_code"] = static_cast<int>(row.error_code);
    }
    rows.push_back(std::move(j));
  }
  return {{"task", task_name(report.task.kind)},
          {"num_classes", report.task.num_classes},
          {"seed", report.seed},
          {"dataset", {{"train", report.n_train}, {"validation", report.n_validation}, {"test", report.n_test}}},
          {"rows", rows},
          {"roc_row", report.roc_row ? nlohmann::json(*report.roc_row) : nlohmann::json(nullptr)}};
}

std::string render_report(const ComparisonReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::Json: return report_to_json(report).dump(2) + "\n";
    case ReportFormat::Csv: return render_csv(report);
    case ReportFormat::Markdown: return render_markdown(report);
  }
  return {};
}

void emit_report(const ComparisonReport& report, ReportFormat format,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write report {}", path.string()));
  out << render_report(report, format);
  if (!out) throw IoError(fmt::format("write to {} failed", path.string()));
}

}  // namespace chunkfuse
