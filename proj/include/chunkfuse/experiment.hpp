#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "chunkfuse/chunker.hpp"
#include "chunkfuse/corpus.hpp"
#include "chunkfuse/error.hpp"
#include "chunkfuse/fusion.hpp"
#include "chunkfuse/linear_scorer.hpp"
#include "chunkfuse/metrics.hpp"
#include "chunkfuse/scoring.hpp"

namespace chunkfuse {

// Declaration order is report order.
enum class Method { Baseline, Ensemble, Aggregation, EnsembleAggregation };

std::string_view method_name(Method method);  // "baseline", "ensemble", ...
Method parse_method_name(std::string_view name);
bool method_is_ensemble(Method method);
bool method_aggregates(Method method);

enum class DataSourceKind { Synthetic, Csv };

struct ExperimentConfig {
  TaskSpec task = TaskSpec::mortality();
  std::uint64_t seed = 42;
  std::filesystem::path output_dir;  // empty: nothing is written

  DataSourceKind source = DataSourceKind::Synthetic;
  SyntheticConfig synthetic;
  std::filesystem::path csv_path;
  CsvSchema csv_schema;

  SplitRatios split;
  std::size_t vocab_max_size = 5000;
  std::optional<std::filesystem::path> vocab_path;

  ChunkingConfig chunking;
  FusionSpec fusion;
  bool compare_overlap = false;  // also evaluate every method with overlap 0

  std::vector<ScorerDescriptor> scorers;
  TrainerConfig trainer;
  std::vector<Method> methods;
  bool parallel_rows = false;

  // Throws ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

nlohmann::json load_config_json(const std::filesystem::path& path);

// Sets `dotted` (e.g. "chunking.overlap", "scorers.1.seed") in `config`.
// The value is parsed as JSON and kept as a string when that fails.
void apply_override(nlohmann::json& config, std::string_view dotted, std::string_view value);

struct ReportRow {
  Method method = Method::Baseline;
  std::vector<std::string> scorer_ids;
  std::size_t overlap = 0;
  std::optional<double> macro_auroc;  // fraction in [0, 1]
  std::vector<std::optional<double>> per_class_auc;
  std::vector<int> skipped_classes;
  std::optional<std::string> error;
  ExitCode error_code = ExitCode::kOk;

  bool with_overlap() const { return overlap > 0; }
};

struct ComparisonReport {
  TaskSpec task;
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  std::size_t n_validation = 0;
  std::size_t n_test = 0;
  std::vector<ReportRow> rows;
  std::optional<std::size_t> roc_row;  // row whose curves went to roc_class_<c>.csv
  std::vector<std::vector<RocPoint>> roc_curves;
  std::map<std::string, double> timings_seconds;  // kept out of report.json

  bool has_errors() const;
  // Code of the first error row, kOk when there is none.
  ExitCode exit_code() const;
};

enum class ReportFormat { Json, Csv, Markdown };

nlohmann::json report_to_json(const ComparisonReport& report);
std::string render_report(const ComparisonReport& report, ReportFormat format);
// Throws IoError.
void emit_report(const ComparisonReport& report, ReportFormat format,
                 const std::filesystem::path& path);

struct ExperimentHooks {
  // Called with the note ids of each train and validation set handed to the
  // trainer, before training starts.
  std::function<void(const std::vector<std::string>& train_ids,
                     const std::vector<std::string>& validation_ids)>
      on_trainer_input;
};

struct PreparedData {
  std::vector<ClinicalNote> notes;  // task-filtered
  DatasetSplit split;
  std::shared_ptr<const Vocabulary> vocab;
  std::map<std::string, std::size_t> index;  // note id -> position in notes
  std::vector<TokenSequence> tokens;          // parallel to notes
};

// Loads or generates the corpus, splits it and builds the vocabulary from the
// training split.
PreparedData prepare_data(const ExperimentConfig& config);

enum class ScorerSource {
  TrainOrLoad,     // train linear scorers unless a checkpoint is given
  RequireCheckpoints,  // linear scorers must load from output_dir
};

struct TrainedScorerSummary {
  std::string scorer_id;
  std::size_t overlap = 0;
  TrainingResult result;
};

// Trains every linear scorer in the config for each overlap setting and
// writes checkpoints, vocab, split and training logs under output_dir.
std::vector<TrainedScorerSummary> train_scorers(const ExperimentConfig& config,
                                                const PreparedData& data,
                                                const ExperimentHooks& hooks = {});

ComparisonReport run_experiment(const ExperimentConfig& config, const ExperimentHooks& hooks = {},
                                ScorerSource source = ScorerSource::TrainOrLoad);

std::string checkpoint_filename(const std::string& scorer_id, std::size_t overlap,
                                std::size_t configured_overlap);

}  // namespace chunkfuse
