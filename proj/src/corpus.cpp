#include "chunkfuse/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "chunkfuse/csv.hpp"
#include "chunkfuse/error.hpp"
#include "chunkfuse/rng.hpp"

namespace chunkfuse {
namespace {

constexpr std::array<std::string_view, kNumSections> kSectionCodes = {"CC", "PI", "MH", "AM",
                                                                      "AL", "PE", "FH", "SH"};

std::string_view trim(std::string_view s) {
  constexpr std::string_view kSpace = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(kSpace);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(kSpace);
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

// Outcome of parsing one label cell.
enum class CellState { Absent, Valid, Invalid };

}  // namespace

std::string_view section_code(SectionKind kind) {
  return kSectionCodes[static_cast<std::size_t>(kind)];
}

std::optional<SectionKind> parse_section_code(std::string_view code) {
  for (std::size_t i = 0; i < kNumSections; ++i) {
    if (kSectionCodes[i] == code) return kSectionOrder[i];
  }
  return std::nullopt;
}

std::string assemble_note(const SectionMap& sections) {
  std::string out;
  for (SectionKind kind : kSectionOrder) {
    const auto part = trim(sections[static_cast<std::size_t>(kind)]);
    if (part.empty()) continue;
    if (!out.empty()) out.push_back(' ');
    out.append(part);
  }
  return out;
}

std::string_view task_name(TaskKind kind) {
  return kind == TaskKind::Mortality ? "mortality" : "length_of_stay";
}

TaskKind parse_task_name(std::string_view name) {
  if (name == "mortality") return TaskKind::Mortality;
  if (name == "length_of_stay" || name == "los") return TaskKind::LengthOfStay;
  throw ConfigError(fmt::format("unknown task '{}'", name));
}

TaskSpec TaskSpec::mortality() { return TaskSpec{TaskKind::Mortality, 2, {}}; }

TaskSpec TaskSpec::length_of_stay() {
  return TaskSpec{TaskKind::LengthOfStay, 4, {3.0, 7.0, 14.0}};
}

TaskSpec TaskSpec::for_kind(TaskKind kind) {
  return kind == TaskKind::Mortality ? mortality() : length_of_stay();
}

void TaskSpec::validate() const {
  const int expected = kind == TaskKind::Mortality ? 2 : 4;
  if (num_classes != expected) {
    throw ConfigError(fmt::format("task {} requires {} classes, got {}", task_name(kind), expected,
                                  num_classes));
  }
  if (kind == TaskKind::LengthOfStay) {
    if (los_bin_edges.size() != 3) throw ConfigError("length_of_stay needs three bin edges");
    if (!std::is_sorted(los_bin_edges.begin(), los_bin_edges.end(), std::less_equal<>())) {
      throw ConfigError("los_bin_edges must be strictly increasing");
    }
  }
}

int derive_los_class(double los_days, const TaskSpec& spec) {
  if (spec.kind != TaskKind::LengthOfStay) {
    throw ConfigError("derive_los_class requires a length_of_stay task");
  }
  if (!std::isfinite(los_days) || los_days < 0.0) {
    throw InvalidLabelError(fmt::format("invalid length of stay {}", los_days));
  }
  // Upper edges are inclusive.
  int cls = 0;
  for (double edge : spec.los_bin_edges) {
    if (los_days > edge) ++cls;
  }
  return cls;
}

ClinicalNote::ClinicalNote(std::string note_id, SectionMap sections,
                           std::optional<int> mortality_label, std::optional<double> los_days)
    : note_id_(std::move(note_id)),
      sections_(std::move(sections)),
      assembled_text_(assemble_note(sections_)),
      mortality_label_(mortality_label),
      los_days_(los_days) {
  if (mortality_label_ && *mortality_label_ != 0 && *mortality_label_ != 1) {
    throw InvalidLabelError(
        fmt::format("note {}: mortality label must be 0 or 1, got {}", note_id_, *mortality_label_));
  }
  if (los_days_ && (!std::isfinite(*los_days_) || *los_days_ < 0.0)) {
    throw InvalidLabelError(fmt::format("note {}: negative length of stay {}", note_id_, *los_days_));
  }
}

std::optional<int> ClinicalNote::label_for(const TaskSpec& task) const {
  if (task.kind == TaskKind::Mortality) return mortality_label_;
  if (!los_days_) return std::nullopt;
  return derive_los_class(*los_days_, task);
}

std::vector<ClinicalNote> filter_for_task(const std::vector<ClinicalNote>& notes,
                                          const TaskSpec& task) {
  std::vector<ClinicalNote> out;
  for (const auto& note : notes) {
    if (note.label_for(task)) out.push_back(note);
  }
  return out;
}

// ---------------------------------------------------------------------------

CsvSchema CsvSchema::from_json(const nlohmann::json& j) {
  CsvSchema schema;
  if (!j.is_object()) throw ConfigError("csv schema must be a JSON object");
  schema.id_column = j.value("id", schema.id_column);
  if (j.contains("sections")) {
    for (const auto& [code, column] : j.at("sections").items()) {
      const auto kind = parse_section_code(code);
      if (!kind) throw ConfigError(fmt::format("unknown section code '{}' in schema", code));
      schema.section_columns[static_cast<std::size_t>(*kind)] = column.get<std::string>();
    }
  }
  schema.mortality_column = j.value("mortality_label", schema.mortality_column);
  schema.los_column = j.value("los_days", schema.los_column);
  return schema;
}

nlohmann::json CsvSchema::to_json() const {
  nlohmann::json sections = nlohmann::json::object();
  for (SectionKind kind : kSectionOrder) {
    sections[std::string(section_code(kind))] = section_columns[static_cast<std::size_t>(kind)];
  }
  return {{"id", id_column},
          {"sections", sections},
          {"mortality_label", mortality_column},
          {"los_days", los_column}};
}

IngestResult ingest_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));

  csv::Reader reader(in);
  const auto header = reader.next();
  if (!header) throw DataError(fmt::format("{}: empty file, header row required", path.string()));

  std::unordered_map<std::string, std::size_t> column_index;
  for (std::size_t i = 0; i < header->size(); ++i) {
    auto name = std::string(trim((*header)[i]));
    // Strip a UTF-8 byte order mark from the first column name.
    if (i == 0 && name.rfind("\xEF\xBB\xBF", 0) == 0) name.erase(0, 3);
    column_index.emplace(std::move(name), i);
  }
  const auto find = [&](const std::string& name) -> std::optional<std::size_t> {
    if (name.empty()) return std::nullopt;
    const auto it = column_index.find(name);
    if (it == column_index.end()) return std::nullopt;
    return it->second;
  };

  IngestResult result;
  const auto id_col = find(schema.id_column);
  if (!id_col) {
    throw SchemaError(
        fmt::format("{}: id column '{}' not found in header", path.string(), schema.id_column));
  }

  std::array<std::optional<std::size_t>, kNumSections> section_cols;
  for (SectionKind kind : kSectionOrder) {
    const auto i = static_cast<std::size_t>(kind);
    section_cols[i] = find(schema.section_columns[i]);
    if (!section_cols[i]) {
      result.warnings.push_back(fmt::format("section {} column '{}' missing; treating as empty",
                                            section_code(kind), schema.section_columns[i]));
    }
  }
  const auto mortality_col = find(schema.mortality_column);
  const auto los_col = find(schema.los_column);
  if (!mortality_col) {
    result.warnings.push_back(
        fmt::format("mortality label column '{}' missing", schema.mortality_column));
  }
  if (!los_col) {
    result.warnings.push_back(fmt::format("length-of-stay column '{}' missing", schema.los_column));
  }
  for (const auto& w : result.warnings) spdlog::warn("{}: {}", path.string(), w);

  const auto cell = [](const csv::Row& row, std::optional<std::size_t> col) -> std::string_view {
    if (!col || *col >= row.size()) return {};
    return row[*col];
  };

  while (auto row = reader.next()) {
    if (row->size() == 1 && trim((*row)[0]).empty()) continue;  // blank line

    std::optional<int> mortality;
    std::optional<double> los;
    CellState state = CellState::Absent;

    if (const auto raw = trim(cell(*row, mortality_col)); !raw.empty()) {
      const auto v = parse_double(raw);
      if (v && (*v == 0.0 || *v == 1.0)) {
        mortality = static_cast<int>(*v);
        state = CellState::Valid;
      } else {
        state = CellState::Invalid;
      }
    }
    if (state != CellState::Invalid) {
      if (const auto raw = trim(cell(*row, los_col)); !raw.empty()) {
        const auto v = parse_double(raw);
        if (v && std::isfinite(*v) && *v >= 0.0) {
          los = *v;
        } else {
          state = CellState::Invalid;
        }
      }
    }
    if (trim(cell(*row, id_col)).empty()) state = CellState::Invalid;
    if (state == CellState::Invalid) {
      ++result.skipped_rows;
      spdlog::debug("{}:{}: skipping row with missing id or unparseable label", path.string(),
                    reader.record_line());
      continue;
    }

    SectionMap sections;
    for (std::size_t i = 0; i < kNumSections; ++i) {
      sections[i] = std::string(cell(*row, section_cols[i]));
    }
    result.notes.emplace_back(std::string(trim(cell(*row, id_col))), std::move(sections), mortality,
                              los);
  }
  return result;
}

void write_notes_csv(const std::filesystem::path& path, const std::vector<ClinicalNote>& notes,
                     const CsvSchema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  csv::Row header{schema.id_column};
  header.insert(header.end(), schema.section_columns.begin(), schema.section_columns.end());
  header.push_back(schema.mortality_column);
  header.push_back(schema.los_column);
  csv::write_row(out, header);
  for (const auto& note : notes) {
    csv::Row row{note.note_id()};
    row.insert(row.end(), note.sections().begin(), note.sections().end());
    row.push_back(note.mortality_label() ? std::to_string(*note.mortality_label()) : "");
    row.push_back(note.los_days() ? fmt::format("{}", *note.los_days()) : "");
    csv::write_row(out, row);
  }
  if (!out) throw IoError(fmt::format("write to {} failed", path.string()));
}

nlohmann::json note_to_json(const ClinicalNote& note) {
  nlohmann::json sections = nlohmann::json::object();
  for (SectionKind kind : kSectionOrder) {
    sections[std::string(section_code(kind))] = note.section(kind);
  }
  nlohmann::json j = {{"note_id", note.note_id()}, {"sections", sections}};
  j["mortality_label"] = note.mortality_label() ? nlohmann::json(*note.mortality_label()) : nlohmann::json(nullptr);
  j["los_days"] = note.los_days() ? nlohmann::json(*note.los_days()) : nlohmann::json(nullptr);
  return j;
}

ClinicalNote note_from_json(const nlohmann::json& j) {
  SectionMap sections;
  for (const auto& [code, text] : j.at("sections").items()) {
    const auto kind = parse_section_code(code);
    if (!kind) throw DataError(fmt::format("unknown section code '{}'", code));
    sections[static_cast<std::size_t>(*kind)] = text.get<std::string>();
  }
  std::optional<int> mortality;
  std::optional<double> los;
  if (j.contains("mortality_label") && !j["mortality_label"].is_null()) {
    mortality = j["mortality_label"].get<int>();
  }
  if (j.contains("los_days") && !j["los_days"].is_null()) los = j["los_days"].get<double>();
  return ClinicalNote(j.at("note_id").get<std::string>(), std::move(sections), mortality, los);
}

// ---------------------------------------------------------------------------

DatasetSplit split_dataset(const std::vector<std::string>& note_ids, const SplitRatios& ratios,
                           std::uint64_t seed) {
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0) {
    throw ConfigError("split ratios must be non-negative");
  }
  if (std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw ConfigError(fmt::format("split ratios must sum to 1, got {} + {} + {}", ratios.train,
                                  ratios.validation, ratios.test));
  }
  if (note_ids.empty()) throw DataError("cannot split an empty corpus");

  const auto n = note_ids.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed, "split");
  rng.shuffle(std::span<std::size_t>(order));

  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.train));
  const auto n_val = std::min(
      n - n_train, static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.validation)));

  DatasetSplit split;
  split.ratios = ratios;
  for (std::size_t i = 0; i < n; ++i) {
    auto& target = i < n_train ? split.train : i < n_train + n_val ? split.validation : split.test;
    target.push_back(note_ids[order[i]]);
  }
  return split;
}

DatasetSplit split_dataset(const std::vector<ClinicalNote>& notes, const SplitRatios& ratios,
                           std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(notes.size());
  for (const auto& note : notes) ids.push_back(note.note_id());
  return split_dataset(ids, ratios, seed);
}

nlohmann::json split_to_json(const DatasetSplit& split) {
  return {{"ratios", {split.ratios.train, split.ratios.validation, split.ratios.test}},
          {"train", split.train},
          {"validation", split.validation},
          {"test", split.test}};
}

}  // namespace chunkfuse
