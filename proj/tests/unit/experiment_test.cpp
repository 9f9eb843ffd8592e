#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <catch_amalgamated.hpp>

#include "chunkfuse/error.hpp"
#include "chunkfuse/experiment.hpp"

using namespace chunkfuse;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / ("chunkfuse_" + name)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

nlohmann::json small_config() {
  return nlohmann::json::parse(R"({
    "task": "mortality",
    "seed": 3,
    "data": {"source": "synthetic",
             "synthetic": {"num_docs": 100, "min_tokens": 40, "max_tokens": 120,
                           "signal_length": 4, "filler_vocab_size": 300}},
    "vocab": {"max_size": 400},
    "chunking": {"capacity": 30, "overlap": 5},
    "trainer": {"max_epochs": 3, "batch_size": 8, "accumulation_steps": 1, "warmup_steps": 2,
                "learning_rate": 0.05},
    "scorers": [{"id": "lin_a", "kind": "linear"}, {"id": "lin_b", "kind": "linear"}],
    "methods": ["baseline", "ensemble", "aggregation", "ensemble_aggregation"]
  })");
}

ComparisonReport golden_report() {
  ComparisonReport r;
  r.task = TaskSpec::mortality();
  r.seed = 7;
  r.n_train = 70;
  r.n_validation = 10;
  r.n_test = 20;
  const auto row = [](Method m, std::vector<std::string> ids, std::size_t overlap,
                      std::optional<double> auc) {
    ReportRow row;
    row.method = m;
    row.scorer_ids = std::move(ids);
    row.overlap = overlap;
    row.macro_auroc = auc;
    return row;
  };
  r.rows.push_back(row(Method::Baseline, {"m1"}, 50, 0.8452));
  r.rows.push_back(row(Method::Baseline, {"m2"}, 50, 0.8));
  r.rows.push_back(row(Method::Ensemble, {"m1", "m2"}, 50, 0.85));
  r.rows.push_back(row(Method::Aggregation, {"m1"}, 50, 0.9));
  auto failed = row(Method::EnsembleAggregation, {"m1", "m2"}, 50, std::nullopt);
  failed.error = "timeout | retry";
  failed.error_code = ExitCode::kScorer;
  r.rows.push_back(failed);
  r.rows.push_back(row(Method::Aggregation, {"m1"}, 0, 0.75));
  return r;
}

}  // namespace

TEST_CASE("config defaults and parsing") {
  const auto c = ExperimentConfig::from_json(small_config());
  REQUIRE(c.task.kind == TaskKind::Mortality);
  REQUIRE(c.seed == 3);
  REQUIRE(c.synthetic.num_classes == 2);
  REQUIRE(c.chunking.capacity == 30);
  REQUIRE(c.fusion.with_overlap);
  REQUIRE(c.scorers.size() == 2);
  REQUIRE(c.methods.size() == 4);
  REQUIRE_NOTHROW(c.validate());

  const auto back = ExperimentConfig::from_json(c.to_json());
  REQUIRE(back.to_json() == c.to_json());

  const auto los = ExperimentConfig::from_json({{"task", "length_of_stay"}});
  REQUIRE(los.task.num_classes == 4);
  REQUIRE(los.synthetic.num_classes == 4);
}

TEST_CASE("config errors") {
  auto j = small_config();
  j["bogus"] = 1;
  REQUIRE_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);

  j = small_config();
  j["methods"] = {"stacking"};
  REQUIRE_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);

  j = small_config();
  j["scorers"] = {{{"id", "only"}}};
  REQUIRE_THROWS_AS(ExperimentConfig::from_json(j).validate(), ConfigError);

  j = small_config();
  j["scorers"][1]["id"] = "lin_a";
  REQUIRE_THROWS_AS(ExperimentConfig::from_json(j).validate(), ConfigError);

  j = small_config();
  j["split"] = {{"train", 0.5}, {"validation", 0.1}, {"test", 0.1}};
  REQUIRE_THROWS_AS(ExperimentConfig::from_json(j).validate(), ConfigError);

  j = small_config();
  j["chunking"]["overlap"] = 30;
  REQUIRE_THROWS_AS(ExperimentConfig::from_json(j).validate(), ConfigError);

  j = small_config();
  j["scorers"][0] = {{"id", "r"}, {"kind", "remote"}};
  REQUIRE_THROWS_AS(ExperimentConfig::from_json(j).validate(), ConfigError);

  j = small_config();
  j["trainer"]["learning_rate"] = "fast";
  REQUIRE_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);
}

TEST_CASE("dotted overrides") {
  auto j = small_config();
  apply_override(j, "chunking.overlap", "0");
  apply_override(j, "scorers.1.seed", "17");
  apply_override(j, "trainer.max_epochs", "1");
  apply_override(j, "output_dir", "/tmp/somewhere");
  apply_override(j, "fusion.aggregation", "weighted");
  apply_override(j, "fusion.model_weights", "[1, 3]");
  REQUIRE(j["chunking"]["overlap"] == 0);
  REQUIRE(j["scorers"][1]["seed"] == 17);
  REQUIRE(j["output_dir"] == "/tmp/somewhere");
  const auto c = ExperimentConfig::from_json(j);
  REQUIRE(c.chunking.overlap == 0);
  REQUIRE_FALSE(c.fusion.with_overlap);
  REQUIRE(c.scorers[1].metadata.at("seed") == "17");
  REQUIRE(c.trainer.max_epochs == 1);
  REQUIRE(c.fusion.effective_weights(2) == std::vector<double>{0.25, 0.75});
  REQUIRE_THROWS_AS(apply_override(j, "scorers.9.seed", "1"), ConfigError);
  REQUIRE_THROWS_AS(apply_override(j, "", "1"), ConfigError);
}

TEST_CASE("checkpoint file names") {
  REQUIRE(checkpoint_filename("lin_a", 50, 50) == "scorer_lin_a.ckpt.json");
  REQUIRE(checkpoint_filename("lin_a", 0, 50) == "scorer_lin_a.overlap0.ckpt.json");
}

TEST_CASE("markdown report layout") {
  const auto report = golden_report();
  REQUIRE(render_report(report, ReportFormat::Markdown) ==
          slurp(std::filesystem::path(CHUNKFUSE_TEST_DATA_DIR) / "report_golden.md"));
  REQUIRE(report.has_errors());
  REQUIRE(report.exit_code() == ExitCode::kScorer);

  const auto csv = render_report(report, ReportFormat::Csv);
  REQUIRE(csv.rfind("method,scorers,overlap,macro_auroc_percent,error\n", 0) == 0);
  REQUIRE(csv.find("baseline,m1,50,84.52,\n") != std::string::npos);
  REQUIRE(csv.find("\"timeout | retry\"") == std::string::npos);

  const auto j = report_to_json(report);
  REQUIRE(j.at("rows").size() == 6);
  REQUIRE(j.at("rows")[0].at("macro_auroc_percent") == "84.52");
  REQUIRE(j.at("rows")[4].at("exit_code") == 3);
  REQUIRE(j.at("rows")[5].at("with_overlap") == false);
}

TEST_CASE("single mock baseline gives one row") {
  auto j = small_config();
  j["scorers"] = {{{"id", "mock"}, {"kind", "mock"}, {"default", {0.3, 0.7}}}};
  j["methods"] = {"baseline"};
  const auto report = run_experiment(ExperimentConfig::from_json(j));
  REQUIRE(report.rows.size() == 1);
  REQUIRE(report.rows[0].method == Method::Baseline);
  REQUIRE(report.rows[0].macro_auroc == 0.5);
  REQUIRE_FALSE(report.has_errors());
  REQUIRE(report.exit_code() == ExitCode::kOk);
  REQUIRE(report.n_train + report.n_validation + report.n_test == 100);
}

TEST_CASE("trainers never see test notes") {
  const auto config = ExperimentConfig::from_json(small_config());
  const auto data = prepare_data(config);
  const std::set<std::string> test(data.split.test.begin(), data.split.test.end());
  std::size_t calls = 0;
  ExperimentHooks hooks;
  hooks.on_trainer_input = [&](const std::vector<std::string>& train,
                               const std::vector<std::string>& validation) {
    ++calls;
    for (const auto& id : train) REQUIRE_FALSE(test.contains(id));
    for (const auto& id : validation) REQUIRE_FALSE(test.contains(id));
    REQUIRE(train.size() == data.split.train.size());
  };
  const auto report = run_experiment(config, hooks);
  REQUIRE(calls == 2);
  REQUIRE(report.rows.size() == 6);
  for (const auto& row : report.rows) REQUIRE(row.macro_auroc.has_value());
}

TEST_CASE("reports are byte-identical across runs") {
  TempDir a("exp_a"), b("exp_b");
  auto j = small_config();
  j["compare_overlap"] = true;
  j["output_dir"] = a.path.string();
  const auto ra = run_experiment(ExperimentConfig::from_json(j));
  j["output_dir"] = b.path.string();
  const auto rb = run_experiment(ExperimentConfig::from_json(j));
  REQUIRE(ra.rows.size() == 12);
  REQUIRE(slurp(a.path / "report.json") == slurp(b.path / "report.json"));
  REQUIRE(slurp(a.path / "report.md") == slurp(b.path / "report.md"));
  REQUIRE(slurp(a.path / "scorer_lin_a.ckpt.json") == slurp(b.path / "scorer_lin_a.ckpt.json"));
  for (const char* f : {"vocab.txt", "split.json", "training_log.json", "timings.json",
                        "roc_class_0.csv", "roc_class_1.csv", "scorer_lin_b.overlap0.ckpt.json"}) {
    INFO(f);
    REQUIRE(std::filesystem::exists(a.path / f));
  }
}

TEST_CASE("evaluation reloads trained checkpoints") {
  TempDir dir("exp_eval");
  auto j = small_config();
  j["output_dir"] = dir.path.string();
  const auto config = ExperimentConfig::from_json(j);
  const auto trained = run_experiment(config);
  const auto evaluated = run_experiment(config, {}, ScorerSource::RequireCheckpoints);
  REQUIRE(report_to_json(trained).dump() == report_to_json(evaluated).dump());

  TempDir empty("exp_eval_empty");
  j["output_dir"] = empty.path.string();
  REQUIRE_THROWS_AS(run_experiment(ExperimentConfig::from_json(j), {}, ScorerSource::RequireCheckpoints),
                    DataError);
}

TEST_CASE("a failing scorer yields an error row and a nonzero exit code") {
  auto j = small_config();
  j["scorers"] = {{{"id", "mock"}, {"kind", "mock"}, {"default", {0.3, 0.7}}},
                  {{"id", "down"}, {"kind", "remote"}, {"endpoint", "http://127.0.0.1:1"},
                   {"metadata", {{"max_retries", "0"}, {"timeout_ms", "300"}}}}};
  j["methods"] = {"baseline", "ensemble"};
  const auto report = run_experiment(ExperimentConfig::from_json(j));
  REQUIRE(report.rows.size() == 3);
  REQUIRE_FALSE(report.rows[0].error);
  REQUIRE(report.rows[1].error);
  REQUIRE(report.rows[2].error);
  REQUIRE(report.exit_code() == ExitCode::kScorer);
  REQUIRE(render_report(report, ReportFormat::Markdown).find("error:") != std::string::npos);
}
