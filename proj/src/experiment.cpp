#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <future>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "chunkfuse/experiment.hpp"
#include "chunkfuse/remote.hpp"
#include "chunkfuse/rng.hpp"

namespace chunkfuse {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

constexpr std::array<std::string_view, 4> kMethodNames = {"baseline", "ensemble", "aggregation",
                                                          "ensemble_aggregation"};

const std::set<std::string> kTopLevelKeys = {
    "task",     "seed",    "output_dir", "data",    "split",         "vocab",
    "chunking", "fusion",  "compare_overlap", "scorers", "trainer", "methods",
    "parallel_rows"};

bool filename_safe(const std::string& id) {
  return !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

TaskSpec task_from_json(const nlohmann::json& j) {
  if (j.is_string()) return TaskSpec::for_kind(parse_task_name(j.get<std::string>()));
  TaskSpec spec = TaskSpec::for_kind(parse_task_name(j.at("kind").get<std::string>()));
  if (j.contains("los_bin_edges")) {
    spec.los_bin_edges = j.at("los_bin_edges").get<std::vector<double>>();
    spec.num_classes = static_cast<int>(spec.los_bin_edges.size()) + 1;
  }
  return spec;
}

nlohmann::json task_to_json(const TaskSpec& task) {
  nlohmann::json j = {{"kind", task_name(task.kind)}};
  if (task.kind == TaskKind::LengthOfStay) j["los_bin_edges"] = task.los_bin_edges;
  return j;
}

std::optional<std::uint64_t> metadata_u64(const ScorerDescriptor& d, const std::string& key) {
  const auto it = d.metadata.find(key);
  if (it == d.metadata.end()) return std::nullopt;
  std::uint64_t value = 0;
  const auto* first = it->second.data();
  const auto* last = first + it->second.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError(fmt::format("scorer {}: {} '{}' is not an unsigned integer", d.scorer_id,
                                  key, it->second));
  }
  return value;
}

std::uint64_t trainer_seed(const ExperimentConfig& config, const ScorerDescriptor& d) {
  if (auto s = metadata_u64(d, "seed")) return *s;
  return substream_seed(config.seed, "scorer/" + d.scorer_id);
}

// Ensemble runs split the batch across members.
TrainerConfig effective_trainer(const ExperimentConfig& config, const ScorerDescriptor& d) {
  TrainerConfig trainer = config.trainer;
  trainer.seed = trainer_seed(config, d);
  const bool ensemble = std::any_of(config.methods.begin(), config.methods.end(), method_is_ensemble);
  if (ensemble && config.scorers.size() >= 2) {
    trainer.batch_size = std::max(1, trainer.batch_size / static_cast<int>(config.scorers.size()));
  }
  return trainer;
}

std::vector<std::size_t> overlap_settings(const ExperimentConfig& config) {
  std::vector<std::size_t> out = {config.chunking.overlap};
  if (config.compare_overlap && config.chunking.overlap != 0) out.push_back(0);
  return out;
}

struct ChunkedSplit {
  std::vector<LabeledNoteChunks> train;
  std::vector<LabeledNoteChunks> validation;
  std::vector<LabeledNoteChunks> test;
};

ChunkedSplit chunk_split(const ExperimentConfig& config, const PreparedData& data,
                         const ChunkingConfig& chunking) {
  const auto& specials = data.vocab->special_ids();
  const auto chunk_ids = [&](const std::vector<std::string>& ids) {
    std::vector<LabeledNoteChunks> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
      const auto pos = data.index.at(id);
      out.push_back({id, chunk_tokens(data.tokens[pos], chunking, specials),
                     *data.notes[pos].label_for(config.task)});
    }
    return out;
  };
  return {chunk_ids(data.split.train), chunk_ids(data.split.validation),
          chunk_ids(data.split.test)};
}

std::vector<std::string> ids_of(std::span<const LabeledNoteChunks> notes) {
  std::vector<std::string> ids;
  ids.reserve(notes.size());
  for (const auto& n : notes) ids.push_back(n.note_id);
  return ids;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << j.dump(2) << '\n';
  if (!out) throw IoError(fmt::format("write to {} failed", path.string()));
}

// A scorer ready for evaluation, or the error that prevented it.
struct ScorerSlot {
  std::unique_ptr<ChunkScorer> scorer;
  std::optional<std::string> error;
  ExitCode error_code = ExitCode::kOk;
};

TrainingProblem problem_for(const ExperimentConfig& config, const PreparedData& data,
                            const ScorerDescriptor& d) {
  return {d.scorer_id, config.task.num_classes, data.vocab->size(), data.vocab->special_ids()};
}

TrainingResult train_one(const ExperimentConfig& config, const PreparedData& data,
                         const ChunkedSplit& chunks, const ScorerDescriptor& d,
                         std::size_t overlap, const ExperimentHooks& hooks) {
  std::set<std::string> test_ids(data.split.test.begin(), data.split.test.end());
  for (const auto* part : {&chunks.train, &chunks.validation}) {
    for (const auto& n : *part) {
      if (test_ids.contains(n.note_id)) {
        throw ContractError(fmt::format("test note {} reached the trainer", n.note_id));
      }
    }
  }
  if (hooks.on_trainer_input) hooks.on_trainer_input(ids_of(chunks.train), ids_of(chunks.validation));

  const TrainerConfig trainer = effective_trainer(config, d);
  FusionSpec single = FusionSpec::uniform(1, overlap > 0);
  spdlog::info("training {} (overlap {}, seed {})", d.scorer_id, overlap, trainer.seed);
  return train_linear_scorer(chunks.train, chunks.validation, trainer, single,
                             problem_for(config, data, d));
}

std::filesystem::path checkpoint_path(const ExperimentConfig& config, const ScorerDescriptor& d,
                                      std::size_t overlap) {
  return config.output_dir / checkpoint_filename(d.scorer_id, overlap, config.chunking.overlap);
}

std::unique_ptr<ChunkScorer> load_linear(const ExperimentConfig& config, const PreparedData& data,
                                         const ScorerDescriptor& d, std::size_t overlap,
                                         ScorerSource source) {
  std::filesystem::path path;
  if (auto it = d.metadata.find("checkpoint"); it != d.metadata.end()) {
    path = it->second;
  } else if (source == ScorerSource::RequireCheckpoints) {
    path = checkpoint_path(config, d, overlap);
  } else {
    return nullptr;
  }
  auto scorer = LinearScorer::load_checkpoint(path, data.vocab->special_ids());
  if (scorer.model().num_features != data.vocab->size()) {
    throw DataError(fmt::format("checkpoint {} has {} features, vocabulary has {} tokens",
                                path.string(), scorer.model().num_features, data.vocab->size()));
  }
  if (scorer.num_classes() != config.task.num_classes) {
    throw DataError(fmt::format("checkpoint {} has {} classes, task needs {}", path.string(),
                                scorer.num_classes(), config.task.num_classes));
  }
  return std::make_unique<LinearScorer>(d.scorer_id, scorer.model(), data.vocab->special_ids());
}

struct ScorerBuild {
  std::vector<ScorerSlot> slots;
  std::vector<TrainedScorerSummary> trained;
};

ScorerBuild build_scorers(const ExperimentConfig& config, const PreparedData& data,
                          const ChunkedSplit& chunks, std::size_t overlap,
                          const ExperimentHooks& hooks, ScorerSource source,
                          std::map<std::string, double>& timings) {
  ScorerBuild build;
  for (const auto& d : config.scorers) {
    ScorerSlot slot;
    const auto start = Clock::now();
    try {
      switch (d.kind) {
        case ScorerKind::Linear:
          slot.scorer = load_linear(config, data, d, overlap, source);
          if (!slot.scorer) {
            auto result = train_one(config, data, chunks, d, overlap, hooks);
            slot.scorer = std::make_unique<LinearScorer>(result.scorer);
            build.trained.push_back({d.scorer_id, overlap, std::move(result)});
            timings[fmt::format("train/{}/overlap{}", d.scorer_id, overlap)] = seconds_since(start);
          }
          break;
        case ScorerKind::Remote:
          slot.scorer = RemoteScorer::from_descriptor(d, config.task.kind);
          break;
        case ScorerKind::Mock:
          slot.scorer = std::make_unique<MockScorer>(MockScorer::from_descriptor(d));
          break;
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      spdlog::error("scorer {}: {}", d.scorer_id, e.what());
      slot.error = e.what();
      slot.error_code = e.exit_code();
      slot.scorer.reset();
    }
    build.slots.push_back(std::move(slot));
  }
  return build;
}

// preds[n][c]: probability vector for chunk c of test note n.
using NotePredictions = std::vector<std::vector<ProbabilityVector>>;

std::optional<NotePredictions> score_test_split(const ChunkedSplit& chunks, ScorerSlot& slot) {
  if (!slot.scorer) return std::nullopt;
  std::vector<Chunk> all;
  for (const auto& n : chunks.test) all.insert(all.end(), n.chunks.begin(), n.chunks.end());
  try {
    auto flat = slot.scorer->score_batch(all);
    if (flat.size() != all.size()) {
      throw ContractError(fmt::format("scorer {} returned {} vectors for {} chunks",
                                      slot.scorer->id(), flat.size(), all.size()));
    }
    NotePredictions preds;
    std::size_t pos = 0;
    for (const auto& n : chunks.test) {
      auto& row = preds.emplace_back();
      for (std::size_t c = 0; c < n.chunks.size(); ++c) {
        if (flat[pos].num_classes() != slot.scorer->num_classes()) {
          throw ContractError(fmt::format("scorer {} returned {} classes, expected {}",
                                          slot.scorer->id(), flat[pos].num_classes(),
                                          slot.scorer->num_classes()));
        }
        row.push_back(std::move(flat[pos++]));
      }
    }
    return preds;
  } catch (const Error& e) {
    spdlog::error("scorer {}: {}", slot.scorer->id(), e.what());
    slot.error = e.what();
    slot.error_code = e.exit_code();
    return std::nullopt;
  }
}

struct RowPlan {
  Method method;
  std::vector<std::size_t> models;
};

std::vector<RowPlan> plan_rows(const ExperimentConfig& config) {
  std::vector<Method> methods = config.methods;
  std::sort(methods.begin(), methods.end());
  methods.erase(std::unique(methods.begin(), methods.end()), methods.end());
  std::vector<std::size_t> all(config.scorers.size());
  for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
  std::vector<RowPlan> plans;
  for (Method m : methods) {
    if (method_is_ensemble(m)) {
      plans.push_back({m, all});
    } else {
      for (std::size_t j : all) plans.push_back({m, {j}});
    }
  }
  return plans;
}

ReportRow evaluate_row(const ExperimentConfig& config, const RowPlan& plan, std::size_t overlap,
                       const ChunkedSplit& chunks, const std::vector<ScorerSlot>& slots,
                       const std::vector<std::optional<NotePredictions>>& preds,
                       RocReport* roc_out) {
  ReportRow row;
  row.method = plan.method;
  row.overlap = overlap;
  for (std::size_t j : plan.models) row.scorer_ids.push_back(config.scorers[j].scorer_id);

  for (std::size_t j : plan.models) {
    if (!preds[j]) {
      row.error = fmt::format("scorer {} failed: {}", config.scorers[j].scorer_id,
                              slots[j].error.value_or("unknown error"));
      row.error_code = slots[j].error_code;
      return row;
    }
  }

  const FusionSpec spec = method_is_ensemble(plan.method) ? config.fusion
                                                          : FusionSpec::uniform(1, overlap > 0);
  std::vector<ProbabilityVector> fused;
  std::vector<int> labels;
  fused.reserve(chunks.test.size());
  for (std::size_t n = 0; n < chunks.test.size(); ++n) {
    const std::size_t used =
        method_aggregates(plan.method) ? chunks.test[n].chunks.size() : std::size_t{1};
    std::vector<std::vector<ProbabilityVector>> rows(used);
    for (std::size_t c = 0; c < used; ++c) {
      for (std::size_t j : plan.models) rows[c].push_back((*preds[j])[n][c]);
    }
    fused.push_back(weighted_fuse(PredictionMatrix(chunks.test[n].note_id, std::move(rows)), spec).fused);
    labels.push_back(chunks.test[n].label);
  }
  try {
    auto roc = macro_auroc(fused, labels, config.task.num_classes);
    row.macro_auroc = roc.macro_auc;
    row.per_class_auc = roc.per_class_auc;
    row.skipped_classes = roc.skipped_classes;
    if (roc_out) *roc_out = std::move(roc);
  } catch (const MetricUndefinedError& e) {
    row.error = e.what();
    row.error_code = e.exit_code();
  }
  return row;
}

}  // namespace

std::string_view method_name(Method method) { return kMethodNames[static_cast<std::size_t>(method)]; }

Method parse_method_name(std::string_view name) {
  for (std::size_t i = 0; i < kMethodNames.size(); ++i) {
    if (kMethodNames[i] == name) return static_cast<Method>(i);
  }
  throw ConfigError(fmt::format("unknown method '{}'", name));
}

bool method_is_ensemble(Method method) {
  return method == Method::Ensemble || method == Method::EnsembleAggregation;
}

bool method_aggregates(Method method) {
  return method == Method::Aggregation || method == Method::EnsembleAggregation;
}

std::string checkpoint_filename(const std::string& scorer_id, std::size_t overlap,
                                std::size_t configured_overlap) {
  if (overlap == configured_overlap) return fmt::format("scorer_{}.ckpt.json", scorer_id);
  return fmt::format("scorer_{}.overlap{}.ckpt.json", scorer_id, overlap);
}

// ---------------------------------------------------------------------------

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kTopLevelKeys.contains(key)) throw ConfigError(fmt::format("unknown config key '{}'", key));
  }
  ExperimentConfig c;
  try {
    if (j.contains("task")) c.task = task_from_json(j.at("task"));
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", std::string());

    if (j.contains("data")) {
      const auto& data = j.at("data");
      const auto source = data.value("source", std::string("synthetic"));
      if (source == "synthetic") {
        c.source = DataSourceKind::Synthetic;
      } else if (source == "csv") {
        c.source = DataSourceKind::Csv;
      } else {
        throw ConfigError(fmt::format("unknown data.source '{}'", source));
      }
      if (data.contains("synthetic")) c.synthetic = SyntheticConfig::from_json(data.at("synthetic"));
      if (!data.contains("synthetic") || !data.at("synthetic").contains("num_classes")) {
        c.synthetic.num_classes = c.task.num_classes;
      }
      if (data.contains("csv")) {
        const auto& csv = data.at("csv");
        c.csv_path = csv.value("path", std::string());
        if (csv.contains("schema")) c.csv_schema = CsvSchema::from_json(csv.at("schema"));
      }
    } else {
      c.synthetic.num_classes = c.task.num_classes;
    }

    if (j.contains("split")) {
      const auto& s = j.at("split");
      c.split.train = s.value("train", c.split.train);
      c.split.validation = s.value("validation", c.split.validation);
      c.split.test = s.value("test", c.split.test);
    }
    if (j.contains("vocab")) {
      const auto& v = j.at("vocab");
      c.vocab_max_size = v.value("max_size", c.vocab_max_size);
      if (v.contains("path") && !v.at("path").is_null()) c.vocab_path = v.at("path").get<std::string>();
    }
    if (j.contains("chunking")) {
      const auto& ch = j.at("chunking");
      c.chunking.capacity = ch.value("capacity", c.chunking.capacity);
      c.chunking.overlap = ch.value("overlap", c.chunking.overlap);
    }
    if (j.contains("fusion")) c.fusion = FusionSpec::from_json(j.at("fusion"));
    c.fusion.with_overlap = c.chunking.overlap > 0;
    c.compare_overlap = j.value("compare_overlap", false);
    if (j.contains("scorers")) {
      for (const auto& s : j.at("scorers")) {
        c.scorers.push_back(ScorerDescriptor::from_json(s, c.task.num_classes));
      }
    }
    if (j.contains("trainer")) c.trainer = TrainerConfig::from_json(j.at("trainer"));
    if (j.contains("methods")) {
      for (const auto& m : j.at("methods")) c.methods.push_back(parse_method_name(m.get<std::string>()));
    }
    c.parallel_rows = j.value("parallel_rows", false);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("invalid config: {}", e.what()));
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json scorers_json = nlohmann::json::array();
  for (const auto& d : scorers) scorers_json.push_back(d.to_json());
  nlohmann::json methods_json = nlohmann::json::array();
  for (Method m : methods) methods_json.push_back(method_name(m));
  nlohmann::json data = {{"source", source == DataSourceKind::Synthetic ? "synthetic" : "csv"}};
  if (source == DataSourceKind::Synthetic) {
    data["synthetic"] = synthetic.to_json();
  } else {
    data["csv"] = {{"path", csv_path.string()}, {"schema", csv_schema.to_json()}};
  }
  return {{"task", task_to_json(task)},
          {"seed", seed},
          {"output_dir", output_dir.string()},
          {"data", data},
          {"split", {{"train", split.train}, {"validation", split.validation}, {"test", split.test}}},
          {"vocab", {{"max_size", vocab_max_size},
                     {"path", vocab_path ? nlohmann::json(vocab_path->string()) : nlohmann::json(nullptr)}}},
          {"chunking", {{"capacity", chunking.capacity}, {"overlap", chunking.overlap}}},
          {"fusion", fusion.to_json()},
          {"compare_overlap", compare_overlap},
          {"scorers", scorers_json},
          {"trainer", trainer.to_json()},
          {"methods", methods_json},
          {"parallel_rows", parallel_rows}};
}

void ExperimentConfig::validate() const {
  task.validate();
  chunking.validate();
  trainer.validate();
  if (methods.empty()) throw ConfigError("at least one method is required");
  if (scorers.empty()) throw ConfigError("at least one scorer is required");
  const bool wants_ensemble = std::any_of(methods.begin(), methods.end(), method_is_ensemble);
  if (wants_ensemble && scorers.size() < 2) {
    throw ConfigError("ensemble methods need at least two scorers");
  }
  std::set<std::string> ids;
  for (const auto& d : scorers) {
    if (!filename_safe(d.scorer_id)) {
      throw ConfigError(fmt::format("scorer id '{}' must use only [A-Za-z0-9_.-]", d.scorer_id));
    }
    if (!ids.insert(d.scorer_id).second) {
      throw ConfigError(fmt::format("duplicate scorer id '{}'", d.scorer_id));
    }
    if (d.num_classes != task.num_classes) {
      throw ConfigError(fmt::format("scorer {} has {} classes, task {} has {}", d.scorer_id,
                                    d.num_classes, task_name(task.kind), task.num_classes));
    }
    if (d.kind == ScorerKind::Remote && !d.metadata.contains("endpoint")) {
      throw ConfigError(fmt::format("remote scorer {} needs an endpoint", d.scorer_id));
    }
    (void)metadata_u64(d, "seed");
  }
  if (fusion.aggregation == AggregationKind::Weighted) {
    try {
      (void)fusion.effective_weights(scorers.size());
    } catch (const ContractError& e) {
      throw ConfigError(e.what());
    }
  }
  for (double r : {split.train, split.validation, split.test}) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be non-negative");
  }
  if (std::abs(split.train + split.validation + split.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  if (vocab_max_size < kNumSpecialTokens + 1) throw ConfigError("vocab.max_size is too small");
  if (source == DataSourceKind::Csv) {
    if (csv_path.empty()) throw ConfigError("data.csv.path is required for csv sources");
  } else {
    synthetic.validate();
    if (synthetic.num_classes != task.num_classes) {
      throw ConfigError(fmt::format("synthetic corpus has {} classes, task needs {}",
                                    synthetic.num_classes, task.num_classes));
    }
    if (task.kind == TaskKind::LengthOfStay && task.los_bin_edges != TaskSpec::length_of_stay().los_bin_edges) {
      throw ConfigError("synthetic length-of-stay corpora assume the default bin edges");
    }
  }
}

nlohmann::json load_config_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config {}", path.string()));
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void apply_override(nlohmann::json& config, std::string_view dotted, std::string_view value) {
  if (dotted.empty()) throw ConfigError("empty override key");
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(value);
  } catch (const nlohmann::json::exception&) {
    parsed = std::string(value);
  }
  nlohmann::json* node = &config;
  std::size_t start = 0;
  for (;;) {
    const auto dot = dotted.find('.', start);
    const std::string key(dotted.substr(start, dot == std::string_view::npos ? dotted.npos : dot - start));
    if (key.empty()) throw ConfigError(fmt::format("malformed override key '{}'", dotted));
    nlohmann::json* next = nullptr;
    if (node->is_array()) {
      std::size_t idx = 0;
      const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), idx);
      if (ec != std::errc() || ptr != key.data() + key.size() || idx >= node->size()) {
        throw ConfigError(fmt::format("override '{}': '{}' is not a valid index", dotted, key));
      }
      next = &(*node)[idx];
    } else {
      if (node->is_null()) *node = nlohmann::json::object();
      if (!node->is_object()) {
        throw ConfigError(fmt::format("override '{}': '{}' is not an object", dotted, key));
      }
      next = &(*node)[key];
    }
    if (dot == std::string_view::npos) {
      *next = std::move(parsed);
      return;
    }
    node = next;
    start = dot + 1;
  }
}

// ---------------------------------------------------------------------------

PreparedData prepare_data(const ExperimentConfig& config) {
  std::vector<ClinicalNote> notes;
  if (config.source == DataSourceKind::Synthetic) {
    notes = generate_synthetic_corpus(config.synthetic, config.seed).notes;
  } else {
    auto ingested = ingest_csv(config.csv_path, config.csv_schema);
    for (const auto& w : ingested.warnings) spdlog::warn("{}", w);
    if (ingested.skipped_rows > 0) {
      spdlog::warn("{}: skipped {} row(s) with invalid labels", config.csv_path.string(),
                   ingested.skipped_rows);
    }
    notes = std::move(ingested.notes);
  }

  PreparedData data;
  data.notes = filter_for_task(notes, config.task);
  if (data.notes.empty()) {
    throw DataError(fmt::format("no notes carry a {} label", task_name(config.task.kind)));
  }
  for (std::size_t i = 0; i < data.notes.size(); ++i) {
    if (!data.index.emplace(data.notes[i].note_id(), i).second) {
      throw DataError(fmt::format("duplicate note id '{}'", data.notes[i].note_id()));
    }
  }
  data.split = split_dataset(data.notes, config.split, config.seed);

  if (config.vocab_path) {
    data.vocab = std::make_shared<Vocabulary>(Vocabulary::load(*config.vocab_path));
  } else {
    std::vector<std::string> texts;
    texts.reserve(data.split.train.size());
    for (const auto& id : data.split.train) texts.push_back(data.notes[data.index.at(id)].assembled_text());
    data.vocab = std::make_shared<Vocabulary>(Vocabulary::build(texts, config.vocab_max_size));
  }

  data.tokens.reserve(data.notes.size());
  for (const auto& note : data.notes) {
    data.tokens.push_back(tokenize(note.assembled_text(), *data.vocab, note.note_id()));
  }
  return data;
}

namespace {

void write_common_artifacts(const ExperimentConfig& config, const PreparedData& data,
                            const std::vector<TrainedScorerSummary>& trained) {
  if (config.output_dir.empty()) return;
  std::filesystem::create_directories(config.output_dir);
  if (!config.vocab_path) data.vocab->save(config.output_dir / "vocab.txt");
  write_json(config.output_dir / "split.json", split_to_json(data.split));
  if (trained.empty()) return;
  nlohmann::json logs = nlohmann::json::array();
  for (const auto& t : trained) {
    auto entry = training_log_to_json(t.result);
    entry["overlap"] = t.overlap;
    logs.push_back(std::move(entry));
    const auto it = std::find_if(config.scorers.begin(), config.scorers.end(),
                                 [&](const auto& d) { return d.scorer_id == t.scorer_id; });
    t.result.scorer.save_checkpoint(checkpoint_path(config, *it, t.overlap),
                                    effective_trainer(config, *it),
                                    t.result.best_val_auroc);
  }
  write_json(config.output_dir / "training_log.json", logs);
}

}  // namespace

std::vector<TrainedScorerSummary> train_scorers(const ExperimentConfig& config,
                                                const PreparedData& data,
                                                const ExperimentHooks& hooks) {
  config.validate();
  std::vector<TrainedScorerSummary> trained;
  for (std::size_t overlap : overlap_settings(config)) {
    ChunkingConfig chunking = config.chunking;
    chunking.overlap = overlap;
    const auto chunks = chunk_split(config, data, chunking);
    for (const auto& d : config.scorers) {
      if (d.kind != ScorerKind::Linear || d.metadata.contains("checkpoint")) continue;
      trained.push_back({d.scorer_id, overlap, train_one(config, data, chunks, d, overlap, hooks)});
    }
  }
  write_common_artifacts(config, data, trained);
  return trained;
}

ComparisonReport run_experiment(const ExperimentConfig& config, const ExperimentHooks& hooks,
                                ScorerSource source) {
  config.validate();
  const auto total_start = Clock::now();
  ComparisonReport report;
  report.task = config.task;
  report.seed = config.seed;

  auto start = Clock::now();
  ExperimentConfig effective = config;
  if (source == ScorerSource::RequireCheckpoints && !effective.vocab_path) {
    if (effective.output_dir.empty()) throw ConfigError("evaluation needs an output_dir with checkpoints");
    effective.vocab_path = effective.output_dir / "vocab.txt";
  }
  const PreparedData data = prepare_data(effective);
  report.n_train = data.split.train.size();
  report.n_validation = data.split.validation.size();
  report.n_test = data.split.test.size();
  if (report.n_test == 0) throw DataError("test split is empty");
  report.timings_seconds["prepare_data"] = seconds_since(start);

  const auto plans = plan_rows(config);
  std::vector<TrainedScorerSummary> trained;
  std::optional<RocReport> headline_roc;

  for (std::size_t overlap : overlap_settings(config)) {
    ChunkingConfig chunking = config.chunking;
    chunking.overlap = overlap;
    const auto chunks = chunk_split(config, data, chunking);

    auto build = build_scorers(config, data, chunks, overlap, hooks, source, report.timings_seconds);
    for (auto& t : build.trained) trained.push_back(std::move(t));

    start = Clock::now();
    std::vector<std::optional<NotePredictions>> preds(build.slots.size());
    if (config.parallel_rows) {
      std::vector<std::future<std::optional<NotePredictions>>> jobs;
      for (auto& slot : build.slots) {
        jobs.push_back(std::async(std::launch::async,
                                  [&chunks, &slot] { return score_test_split(chunks, slot); }));
      }
      for (std::size_t j = 0; j < jobs.size(); ++j) preds[j] = jobs[j].get();
    } else {
      for (std::size_t j = 0; j < build.slots.size(); ++j) preds[j] = score_test_split(chunks, build.slots[j]);
    }
    report.timings_seconds[fmt::format("score_test/overlap{}", overlap)] = seconds_since(start);

    start = Clock::now();
    std::vector<ReportRow> rows(plans.size());
    std::vector<RocReport> rocs(plans.size());
    if (config.parallel_rows) {
      std::vector<std::future<ReportRow>> jobs;
      for (std::size_t r = 0; r < plans.size(); ++r) {
        jobs.push_back(std::async(std::launch::async, [&, r] {
          return evaluate_row(config, plans[r], overlap, chunks, build.slots, preds, &rocs[r]);
        }));
      }
      for (std::size_t r = 0; r < jobs.size(); ++r) rows[r] = jobs[r].get();
    } else {
      for (std::size_t r = 0; r < plans.size(); ++r) {
        rows[r] = evaluate_row(config, plans[r], overlap, chunks, build.slots, preds, &rocs[r]);
      }
    }
    report.timings_seconds[fmt::format("evaluate/overlap{}", overlap)] = seconds_since(start);

    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (overlap == config.chunking.overlap && !rows[r].error) {
        report.roc_row = report.rows.size();
        headline_roc = rocs[r];
      }
      report.rows.push_back(std::move(rows[r]));
    }
  }
  if (headline_roc) report.roc_curves = headline_roc->roc_points;

  write_common_artifacts(effective, data, trained);
  report.timings_seconds["total"] = seconds_since(total_start);
  if (!config.output_dir.empty()) {
    emit_report(report, ReportFormat::Json, config.output_dir / "report.json");
    emit_report(report, ReportFormat::Markdown, config.output_dir / "report.md");
    for (std::size_t c = 0; c < report.roc_curves.size(); ++c) {
      if (report.roc_curves[c].empty()) continue;
      write_roc_csv(config.output_dir / fmt::format("roc_class_{}.csv", c), report.roc_curves[c]);
    }
    nlohmann::json timings = report.timings_seconds;
    write_json(config.output_dir / "timings.json", timings);
  }
  return report;
}

}  // namespace chunkfuse
