#include <catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <set>

#include "chunkfuse/corpus.hpp"
#include "chunkfuse/error.hpp"
#include "chunkfuse/rng.hpp"

using namespace chunkfuse;

namespace {

const std::filesystem::path kData = CHUNKFUSE_TEST_DATA_DIR;

SectionMap sections_of(std::initializer_list<std::pair<SectionKind, std::string>> parts) {
  SectionMap m;
  for (const auto& [k, v] : parts) m[static_cast<std::size_t>(k)] = v;
  return m;
}

}  // namespace

TEST_CASE("assemble_note joins non-empty sections in fixed order") {
  using enum SectionKind;
  REQUIRE(assemble_note(sections_of({{CC, "chest pain"}, {PI, ""}, {MH, "diabetes"}})) ==
          "chest pain diabetes");
  REQUIRE(assemble_note(SectionMap{}) == "");
  REQUIRE(assemble_note(sections_of({{SH, "h"}, {FH, "g"}, {PE, "f"}, {AL, "e"},
                                     {AM, "d"}, {MH, "c"}, {PI, "b"}, {CC, "a"}})) ==
          "a b c d e f g h");
  REQUIRE(assemble_note(sections_of({{CC, "  padded \n"}, {PI, "   "}, {SH, "\tend"}})) ==
          "padded end");
}

TEST_CASE("section codes round-trip") {
  for (SectionKind k : kSectionOrder) REQUIRE(parse_section_code(section_code(k)) == k);
  REQUIRE_FALSE(parse_section_code("XX"));
}

TEST_CASE("derive_los_class uses inclusive upper edges") {
  const auto los = TaskSpec::length_of_stay();
  REQUIRE(derive_los_class(0.0, los) == 0);
  REQUIRE(derive_los_class(3.0, los) == 0);
  REQUIRE(derive_los_class(3.0001, los) == 1);
  REQUIRE(derive_los_class(7.0, los) == 1);
  REQUIRE(derive_los_class(7.5, los) == 2);
  REQUIRE(derive_los_class(14.0, los) == 2);
  REQUIRE(derive_los_class(14.5, los) == 3);
  REQUIRE(derive_los_class(400.0, los) == 3);
  REQUIRE_THROWS_AS(derive_los_class(-0.5, los), InvalidLabelError);
  REQUIRE_THROWS_AS(derive_los_class(std::nan(""), los), InvalidLabelError);
  REQUIRE_THROWS_AS(derive_los_class(2.0, TaskSpec::mortality()), ConfigError);
}

TEST_CASE("derive_los_class is monotone") {
  const auto los = TaskSpec::length_of_stay();
  int prev = 0;
  for (double d = 0.0; d <= 60.0; d += 0.01) {
    const int c = derive_los_class(d, los);
    REQUIRE(c >= prev);
    REQUIRE(c <= 3);
    prev = c;
  }
  REQUIRE(prev == 3);
}

TEST_CASE("task specs validate class counts and edges") {
  REQUIRE_NOTHROW(TaskSpec::mortality().validate());
  REQUIRE_NOTHROW(TaskSpec::length_of_stay().validate());
  auto bad = TaskSpec::mortality();
  bad.num_classes = 4;
  REQUIRE_THROWS_AS(bad.validate(), ConfigError);
  auto edges = TaskSpec::length_of_stay();
  edges.los_bin_edges = {3, 3, 14};
  REQUIRE_THROWS_AS(edges.validate(), ConfigError);
  REQUIRE(parse_task_name("los") == TaskKind::LengthOfStay);
  REQUIRE_THROWS_AS(parse_task_name("sepsis"), ConfigError);
}

TEST_CASE("clinical note rejects invalid labels and derives task labels") {
  REQUIRE_THROWS_AS(ClinicalNote("x", {}, 2), InvalidLabelError);
  REQUIRE_THROWS_AS(ClinicalNote("x", {}, std::nullopt, -1.0), InvalidLabelError);
  ClinicalNote note("x", sections_of({{SectionKind::CC, "a"}}), 1, 9.0);
  REQUIRE(note.label_for(TaskSpec::mortality()) == 1);
  REQUIRE(note.label_for(TaskSpec::length_of_stay()) == 2);
  ClinicalNote unlabeled("y", {});
  REQUIRE_FALSE(unlabeled.label_for(TaskSpec::mortality()));
  const std::vector<ClinicalNote> all = {note, unlabeled};
  REQUIRE(filter_for_task(all, TaskSpec::mortality()).size() == 1);
}

TEST_CASE("ingest well-formed csv") {
  const auto result = ingest_csv(kData / "notes_basic.csv", {});
  REQUIRE(result.notes.size() == 3);
  REQUIRE(result.skipped_rows == 0);
  REQUIRE(result.warnings.empty());
  const auto& a2 = result.notes[1];
  REQUIRE(a2.note_id() == "a2");
  REQUIRE(a2.section(SectionKind::CC) == "shortness of breath, cough");
  REQUIRE(a2.mortality_label() == 0);
  REQUIRE(a2.los_days() == 7.0);
  const auto& a3 = result.notes[2];
  REQUIRE(a3.assembled_text() == "fever rigors\nand chills");
  REQUIRE_FALSE(a3.mortality_label());
  REQUIRE(a3.label_for(TaskSpec::length_of_stay()) == 3);
  for (const auto& n : result.notes) REQUIRE(n.assembled_text() == assemble_note(n.sections()));
}

TEST_CASE("ingest skips rows with unparseable labels or ids") {
  const auto result = ingest_csv(kData / "notes_bad_labels.csv", {});
  // b2: los "abc", b3: mortality 2, fourth row: empty id.
  REQUIRE(result.skipped_rows == 3);
  REQUIRE(result.notes.size() == 2);
  REQUIRE(result.notes[0].note_id() == "b1");
  REQUIRE(result.notes[1].note_id() == "b5");
  REQUIRE_FALSE(result.notes[1].mortality_label());
}

TEST_CASE("ingest with a custom schema warns about missing section columns") {
  const auto schema = CsvSchema::from_json(nlohmann::json::parse(R"({
    "id": "id",
    "sections": {"CC": "CC", "PI": "PI", "MH": "MH", "AM": "AM", "AL": "AL", "PE": "PE",
                 "FH": "FH", "SH": "SH"},
    "mortality_label": "died", "los_days": "stay"})"));
  const auto result = ingest_csv(kData / "notes_custom.csv", schema);
  REQUIRE(result.notes.size() == 2);
  REQUIRE(result.warnings.size() == 1);
  REQUIRE_THAT(result.warnings[0], Catch::Matchers::ContainsSubstring("FH"));
  for (const auto& n : result.notes) REQUIRE(n.section(SectionKind::FH).empty());
  REQUIRE(result.notes[0].assembled_text() == "headache two days migraine normal nonsmoker");
  REQUIRE(result.notes[1].mortality_label() == 1);
}

TEST_CASE("ingest errors") {
  REQUIRE_THROWS_AS(ingest_csv(kData / "does_not_exist.csv", {}), IoError);
  REQUIRE_THROWS_AS(ingest_csv(kData / "notes_no_id.csv", {}), SchemaError);
  REQUIRE_THROWS_AS(CsvSchema::from_json(nlohmann::json::parse(R"({"sections": {"ZZ": "x"}})")),
                    ConfigError);
}

TEST_CASE("notes round-trip through csv and json") {
  const auto original = ingest_csv(kData / "notes_basic.csv", {}).notes;
  const auto path = std::filesystem::temp_directory_path() / "chunkfuse_roundtrip.csv";
  write_notes_csv(path, original);
  const auto reread = ingest_csv(path, {}).notes;
  std::filesystem::remove(path);
  REQUIRE(reread.size() == original.size());
  for (std::size_t i = 0; i < original.size(); ++i) {
    REQUIRE(reread[i].note_id() == original[i].note_id());
    REQUIRE(reread[i].assembled_text() == original[i].assembled_text());
    REQUIRE(reread[i].mortality_label() == original[i].mortality_label());
    REQUIRE(reread[i].los_days() == original[i].los_days());
    const auto back = note_from_json(note_to_json(original[i]));
    REQUIRE(back.sections() == original[i].sections());
    REQUIRE(back.los_days() == original[i].los_days());
  }
}

TEST_CASE("split_dataset sizes and determinism") {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back(std::to_string(i));
  const auto s = split_dataset(ids, {}, 42);
  REQUIRE(s.train.size() == 7);
  REQUIRE(s.validation.size() == 1);
  REQUIRE(s.test.size() == 2);
  const auto again = split_dataset(ids, {}, 42);
  REQUIRE(again.train == s.train);
  REQUIRE(again.validation == s.validation);
  REQUIRE(again.test == s.test);
}

TEST_CASE("split_dataset partitions every corpus size") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = 3 + rng.below(400);
    const double a = rng.uniform(), b = rng.uniform() * (1.0 - a);
    const SplitRatios ratios{a, b, 1.0 - a - b};
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("n" + std::to_string(i));
    const auto s = split_dataset(ids, ratios, trial);
    std::set<std::string> seen;
    for (const auto* part : {&s.train, &s.validation, &s.test}) {
      for (const auto& id : *part) REQUIRE(seen.insert(id).second);
    }
    REQUIRE(seen.size() == n);
    const auto nd = static_cast<double>(n);
    REQUIRE(std::abs(static_cast<double>(s.train.size()) - nd * ratios.train) <= 1.0);
    REQUIRE(std::abs(static_cast<double>(s.validation.size()) - nd * ratios.validation) <= 1.0);
    REQUIRE(std::abs(static_cast<double>(s.test.size()) - nd * ratios.test) <= 1.0);
  }
}

TEST_CASE("split_dataset rejects bad input") {
  const std::vector<std::string> ids = {"a", "b", "c"};
  REQUIRE_THROWS_AS(split_dataset(ids, {0.5, 0.2, 0.2}, 1), ConfigError);
  REQUIRE_THROWS_AS(split_dataset(ids, {1.2, -0.2, 0.0}, 1), ConfigError);
  REQUIRE_THROWS_AS(split_dataset(std::vector<std::string>{}, {}, 1), DataError);
  REQUIRE(split_dataset(ids, {}, 1).train != split_dataset(ids, {}, 2).train);
}
