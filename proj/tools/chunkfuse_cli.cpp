#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "chunkfuse/chunker.hpp"
#include "chunkfuse/corpus.hpp"
#include "chunkfuse/error.hpp"
#include "chunkfuse/experiment.hpp"
#include "chunkfuse/remote.hpp"
#include "chunkfuse/tokenizer.hpp"

namespace cf = chunkfuse;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

// Turns leftover "--a.b value" / "--a.b=value" arguments into overrides.
void apply_extras(nlohmann::json& config, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.size() < 3) {
      throw cf::ConfigError(fmt::format("unexpected argument '{}'", arg));
    }
    const std::string body = arg.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      cf::apply_override(config, body.substr(0, eq), body.substr(eq + 1));
    } else if (i + 1 < extras.size()) {
      cf::apply_override(config, body, extras[++i]);
    } else {
      throw cf::ConfigError(fmt::format("override '{}' has no value", arg));
    }
  }
}

struct ExperimentArgs {
  std::string config_path;
  std::vector<std::string> sets;
};

void add_experiment_options(CLI::App* sub, ExperimentArgs& args) {
  sub->add_option("-c,--config", args.config_path, "Experiment config (JSON)");
  sub->add_option("--set", args.sets, "Override as dotted.key=value (repeatable)");
  sub->allow_extras();
  sub->footer("Any config field can also be given as --<dotted.name> <value>.");
}

cf::ExperimentConfig resolve_config(const ExperimentArgs& args, const CLI::App* sub) {
  nlohmann::json j = args.config_path.empty() ? nlohmann::json::object()
                                              : cf::load_config_json(args.config_path);
  for (const auto& s : args.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw cf::ConfigError(fmt::format("--set '{}' needs key=value", s));
    cf::apply_override(j, s.substr(0, eq), s.substr(eq + 1));
  }
  apply_extras(j, sub->remaining());
  auto config = cf::ExperimentConfig::from_json(j);
  config.validate();
  return config;
}

void print_report(const cf::ComparisonReport& report) {
  std::cout << cf::render_report(report, cf::ReportFormat::Markdown);
}

cf::SignalPlacement parse_placement(const std::string& s) {
  if (s == "uniform") return cf::SignalPlacement::Uniform;
  if (s == "straddle") return cf::SignalPlacement::Straddle;
  if (s == "late") return cf::SignalPlacement::Late;
  throw cf::ConfigError(fmt::format("unknown placement '{}'", s));
}

std::vector<double> parse_vector(const std::string& text) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto piece = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      out.push_back(std::stod(piece));
    } catch (const std::logic_error&) {
      throw cf::ConfigError(fmt::format("'{}' is not a number", piece));
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Chunked scoring, aggregation and ensemble fusion for long clinical notes"};
  app.require_subcommand(1);
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a notes CSV and write normalized JSONL");
  std::string ingest_input, ingest_schema, ingest_output, ingest_task;
  ingest->add_option("input", ingest_input, "Notes CSV")->required()->check(CLI::ExistingFile);
  ingest->add_option("--schema", ingest_schema, "Column mapping (JSON)");
  ingest->add_option("-o,--output", ingest_output, "Write notes as JSONL");
  ingest->add_option("--task", ingest_task, "Only keep notes labeled for this task");

  // generate
  auto* generate = app.add_subcommand("generate", "Write a synthetic planted-signal corpus");
  std::string gen_config, gen_output, gen_format = "csv", gen_placement;
  std::uint64_t gen_seed = 42;
  cf::SyntheticConfig gen;
  generate->add_option("-o,--output", gen_output, "Output file")->required();
  generate->add_option("--config", gen_config, "Generator settings (JSON)");
  generate->add_option("--format", gen_format, "csv or jsonl")->check(CLI::IsMember({"csv", "jsonl"}));
  generate->add_option("--seed", gen_seed, "Seed");
  generate->add_option("--num-docs", gen.num_docs);
  generate->add_option("--min-tokens", gen.min_tokens);
  generate->add_option("--max-tokens", gen.max_tokens);
  generate->add_option("--num-classes", gen.num_classes)->check(CLI::IsMember({2, 4}));
  generate->add_option("--signal-length", gen.signal_length);
  generate->add_option("--decoy-rate", gen.decoy_rate);
  generate->add_option("--placement", gen_placement, "uniform, straddle or late");

  // experiment subcommands
  ExperimentArgs train_args, eval_args, compare_args;
  auto* train = app.add_subcommand("train", "Prepare data, train linear scorers, write checkpoints");
  add_experiment_options(train, train_args);
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate saved checkpoints on the test split");
  add_experiment_options(evaluate, eval_args);
  auto* compare = app.add_subcommand("compare", "Train (or load) scorers and run the method comparison");
  add_experiment_options(compare, compare_args);
  std::string compare_csv;
  compare->add_option("--csv", compare_csv, "Also write the report as CSV");

  // serve-mock
  auto* serve = app.add_subcommand("serve-mock", "Serve the stub scoring protocol");
  std::string serve_host = "127.0.0.1", serve_fixed;
  int serve_port = 8080;
  cf::StubServerOptions stub;
  bool no_info = false;
  serve->add_option("--host", serve_host);
  serve->add_option("--port", serve_port);
  serve->add_option("--num-classes", stub.num_classes);
  serve->add_option("--max-batch", stub.max_batch);
  serve->add_option("--fixed", serve_fixed, "Comma-separated vector returned for every chunk");
  serve->add_option("--drop-last", stub.drop_last, "Return this many fewer vectors than chunks");
  serve->add_option("--scale", stub.sum_scale, "Multiply every returned vector");
  serve->add_option("--fail-status", stub.fail_status, "Answer /score with this HTTP status");
  serve->add_flag("--no-info", no_info, "404 on /info");

  // chunks
  auto* chunks_cmd = app.add_subcommand("chunks", "Tokenize and chunk a text file (debugging aid)");
  std::string chunk_text, chunk_vocab;
  cf::ChunkingConfig chunk_cfg;
  chunks_cmd->add_option("text", chunk_text, "Text file")->required()->check(CLI::ExistingFile);
  chunks_cmd->add_option("--vocab", chunk_vocab, "Vocabulary file")->required()->check(CLI::ExistingFile);
  chunks_cmd->add_option("--capacity", chunk_cfg.capacity);
  chunks_cmd->add_option("--overlap", chunk_cfg.overlap);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(cf::ExitCode::kConfig);
  }
  spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);
  spdlog::set_pattern("[%l] %v");

  if (*ingest) {
    cf::CsvSchema schema;
    if (!ingest_schema.empty()) schema = cf::CsvSchema::from_json(cf::load_config_json(ingest_schema));
    auto result = cf::ingest_csv(ingest_input, schema);
    for (const auto& w : result.warnings) spdlog::warn("{}", w);
    auto notes = std::move(result.notes);
    if (!ingest_task.empty()) {
      notes = cf::filter_for_task(notes, cf::TaskSpec::for_kind(cf::parse_task_name(ingest_task)));
    }
    std::size_t mortality = 0, los = 0;
    for (const auto& n : notes) {
      mortality += n.mortality_label().has_value();
      los += n.los_days().has_value();
    }
    fmt::print("{} notes ({} with mortality labels, {} with length of stay), {} rows skipped\n",
               notes.size(), mortality, los, result.skipped_rows);
    if (!ingest_output.empty()) {
      std::ofstream out(ingest_output);
      if (!out) throw cf::IoError(fmt::format("cannot write {}", ingest_output));
      for (const auto& n : notes) out << cf::note_to_json(n).dump() << '\n';
    }
    return 0;
  }

  if (*generate) {
    cf::SyntheticConfig config = gen;
    if (!gen_config.empty()) {
      config = cf::SyntheticConfig::from_json(cf::load_config_json(gen_config));
      // Explicit flags win over the file.
      for (const auto* opt : generate->get_options()) {
        if (opt->count() == 0) continue;
        const auto& name = opt->get_name();
        if (name == "--num-docs") config.num_docs = gen.num_docs;
        if (name == "--min-tokens") config.min_tokens = gen.min_tokens;
        if (name == "--max-tokens") config.max_tokens = gen.max_tokens;
        if (name == "--num-classes") config.num_classes = gen.num_classes;
        if (name == "--signal-length") config.signal_length = gen.signal_length;
        if (name == "--decoy-rate") config.decoy_rate = gen.decoy_rate;
      }
    }
    if (!gen_placement.empty()) config.placement = parse_placement(gen_placement);
    const auto corpus = cf::generate_synthetic_corpus(config, gen_seed);
    if (gen_format == "csv") {
      cf::write_notes_csv(gen_output, corpus.notes);
    } else {
      std::ofstream out(gen_output);
      if (!out) throw cf::IoError(fmt::format("cannot write {}", gen_output));
      for (const auto& n : corpus.notes) out << cf::note_to_json(n).dump() << '\n';
    }
    fmt::print("wrote {} notes to {}\n", corpus.notes.size(), gen_output);
    return 0;
  }

  if (*train) {
    const auto config = resolve_config(train_args, train);
    if (config.output_dir.empty()) throw cf::ConfigError("train needs output_dir");
    const auto data = cf::prepare_data(config);
    const auto trained = cf::train_scorers(config, data);
    for (const auto& t : trained) {
      fmt::print("{} (overlap {}): best validation macro-AUROC {:.4f} at epoch {}{}\n", t.scorer_id,
                 t.overlap, t.result.best_val_auroc, t.result.best_epoch,
                 t.result.stopped_early ? ", stopped early" : "");
    }
    return 0;
  }

  if (*evaluate || *compare) {
    const bool is_eval = evaluate->parsed();
    const auto config = resolve_config(is_eval ? eval_args : compare_args, is_eval ? evaluate : compare);
    const auto report = cf::run_experiment(
        config, {}, is_eval ? cf::ScorerSource::RequireCheckpoints : cf::ScorerSource::TrainOrLoad);
    if (!compare_csv.empty()) cf::emit_report(report, cf::ReportFormat::Csv, compare_csv);
    print_report(report);
    return static_cast<int>(report.exit_code());
  }

  if (*serve) {
    if (!serve_fixed.empty()) stub.fixed_scores = parse_vector(serve_fixed);
    stub.serve_info = !no_info;
    cf::StubScoringServer server(stub);
    const int port = server.start(serve_host, serve_port);
    spdlog::info("stub scorer listening on http://{}:{} ({} classes, max batch {})", serve_host, port,
                 stub.num_classes, stub.max_batch);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    return 0;
  }

  if (*chunks_cmd) {
    chunk_cfg.validate();
    const auto vocab = cf::Vocabulary::load(chunk_vocab);
    std::ifstream in(chunk_text);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto tokens = cf::tokenize(text, vocab, chunk_text);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& c : cf::chunk_tokens(tokens, chunk_cfg, vocab.special_ids())) {
      out.push_back(cf::chunk_to_json(c));
    }
    std::cout << out.dump() << '\n';
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const cf::Error& e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(e.exit_code());
  } catch (const std::filesystem::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(cf::ExitCode::kData);
  }
}
