#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace chunkfuse {

// The eight admission-note sections, in assembly order.
enum class SectionKind : std::uint8_t { CC, PI, MH, AM, AL, PE, FH, SH };

inline constexpr std::size_t kNumSections = 8;
inline constexpr std::array<SectionKind, kNumSections> kSectionOrder = {
    SectionKind::CC, SectionKind::PI, SectionKind::MH, SectionKind::AM,
    SectionKind::AL, SectionKind::PE, SectionKind::FH, SectionKind::SH};

std::string_view section_code(SectionKind kind);
std::optional<SectionKind> parse_section_code(std::string_view code);

// Indexed by static_cast<size_t>(SectionKind).
using SectionMap = std::array<std::string, kNumSections>;

// Fixed-order concatenation of the sections. Empty sections are elided and
// each surviving section is trimmed, so the result has no leading, trailing
// or doubled separator spaces.
std::string assemble_note(const SectionMap& sections);

enum class TaskKind { Mortality, LengthOfStay };

std::string_view task_name(TaskKind kind);  // "mortality" | "length_of_stay"
TaskKind parse_task_name(std::string_view name);

struct TaskSpec {
  TaskKind kind = TaskKind::Mortality;
  int num_classes = 2;
  std::vector<double> los_bin_edges;

  static TaskSpec mortality();
  static TaskSpec length_of_stay();
  static TaskSpec for_kind(TaskKind kind);

  // Throws ConfigError when the class count or bin edges are inconsistent.
  void validate() const;
};

// Class 0: <= 3 days, 1: (3, 7], 2: (7, 14], 3: > 14. Throws
// InvalidLabelError for negative or non-finite durations.
int derive_los_class(double los_days, const TaskSpec& spec);

class ClinicalNote {
 public:
  ClinicalNote(std::string note_id, SectionMap sections,
               std::optional<int> mortality_label = std::nullopt,
               std::optional<double> los_days = std::nullopt);

  const std::string& note_id() const { return note_id_; }
  const SectionMap& sections() const { return sections_; }
  const std::string& section(SectionKind kind) const {
    return sections_[static_cast<std::size_t>(kind)];
  }
  const std::string& assembled_text() const { return assembled_text_; }
  std::optional<int> mortality_label() const { return mortality_label_; }
  std::optional<double> los_days() const { return los_days_; }

  // Class index for the task, or nullopt when the note carries no label for it.
  std::optional<int> label_for(const TaskSpec& task) const;

 private:
  std::string note_id_;
  SectionMap sections_;
  std::string assembled_text_;
  std::optional<int> mortality_label_;
  std::optional<double> los_days_;
};

// Notes that carry a label for the task, in input order.
std::vector<ClinicalNote> filter_for_task(const std::vector<ClinicalNote>& notes,
                                          const TaskSpec& task);

// ---------------------------------------------------------------------------
// CSV ingestion

struct CsvSchema {
  std::string id_column = "note_id";
  std::array<std::string, kNumSections> section_columns = {
      "chief_complaint",       "present_illness", "medical_history", "admission_medications",
      "allergies",             "physical_exam",   "family_history",  "social_history"};
  std::string mortality_column = "mortality_label";
  std::string los_column = "los_days";

  static CsvSchema from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct IngestResult {
  std::vector<ClinicalNote> notes;
  std::size_t skipped_rows = 0;
  std::vector<std::string> warnings;
};

// Reads an RFC-4180 CSV with a header row. Rows whose label cells are present
// but unparseable are skipped and counted; section columns missing from the
// header are read as empty with a warning.
IngestResult ingest_csv(const std::filesystem::path& path, const CsvSchema& schema);

void write_notes_csv(const std::filesystem::path& path, const std::vector<ClinicalNote>& notes,
                     const CsvSchema& schema = {});

nlohmann::json note_to_json(const ClinicalNote& note);
ClinicalNote note_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Splitting

struct SplitRatios {
  double train = 0.7;
  double validation = 0.1;
  double test = 0.2;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  SplitRatios ratios;
};

// Shuffles note ids with the seed and cuts them at the rounded ratio
// boundaries. Throws ConfigError when the ratios are negative or do not sum
// to 1 within 1e-9, DataError on an empty corpus.
DatasetSplit split_dataset(const std::vector<std::string>& note_ids, const SplitRatios& ratios,
                           std::uint64_t seed);
DatasetSplit split_dataset(const std::vector<ClinicalNote>& notes, const SplitRatios& ratios,
                           std::uint64_t seed);

nlohmann::json split_to_json(const DatasetSplit& split);

// ---------------------------------------------------------------------------
// Synthetic corpus

enum class SignalPlacement {
  Uniform,   // offset uniform over every position the pattern fits
  Straddle,  // with straddle_probability, cross a multiple of straddle_period
  Late,      // offset uniform over [min_signal_offset, end]
};

struct SyntheticConfig {
  std::size_t num_docs = 200;
  std::size_t min_tokens = 1500;
  std::size_t max_tokens = 3000;
  int num_classes = 2;
  // Fraction of documents in class 1 for binary corpora; multi-class corpora
  // are balanced across classes.
  double class_balance = 0.5;
  std::size_t signal_length = 5;
  std::size_t filler_vocab_size = 2000;
  // Probability that a filler position holds a random signal-vocabulary token
  // instead (present in every class, never forming a full pattern).
  double decoy_rate = 0.0;
  SignalPlacement placement = SignalPlacement::Uniform;
  double straddle_probability = 0.5;
  std::size_t straddle_period = 510;
  std::size_t min_signal_offset = 0;

  static SyntheticConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

struct PlantedSignal {
  int label = 0;
  std::size_t length_tokens = 0;
  // Token offset of the pattern in the assembled text; nullopt for class 0.
  std::optional<std::size_t> offset;
};

struct SyntheticCorpus {
  std::vector<ClinicalNote> notes;
  std::vector<PlantedSignal> signals;  // parallel to notes
  // patterns[c] is the token pattern of class c; patterns[0] is empty.
  std::vector<std::vector<std::string>> patterns;
};

SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& config, std::uint64_t seed);

// Number of (possibly overlapping) occurrences of pattern in the
// whitespace-separated token stream of text.
std::size_t count_pattern_occurrences(std::string_view text,
                                      const std::vector<std::string>& pattern);

}  // namespace chunkfuse
