#include <catch_amalgamated.hpp>

#include <array>

#include "chunkfuse/corpus.hpp"
#include "chunkfuse/error.hpp"
#include "chunkfuse/tokenizer.hpp"

using namespace chunkfuse;

TEST_CASE("positives carry the pattern once, negatives never") {
  SyntheticConfig config;
  config.num_docs = 200;
  const auto corpus = generate_synthetic_corpus(config, 7);
  REQUIRE(corpus.notes.size() == 200);
  std::size_t positives = 0;
  for (std::size_t i = 0; i < corpus.notes.size(); ++i) {
    const auto& note = corpus.notes[i];
    const auto& signal = corpus.signals[i];
    const auto n_tokens = normalize_tokens(note.assembled_text()).size();
    REQUIRE(n_tokens >= config.min_tokens);
    REQUIRE(n_tokens <= config.max_tokens);
    const auto hits = count_pattern_occurrences(note.assembled_text(), corpus.patterns[1]);
    if (signal.label == 1) {
      ++positives;
      REQUIRE(hits == 1);
      REQUIRE(signal.offset);
      REQUIRE(note.mortality_label() == 1);
    } else {
      REQUIRE(hits == 0);
      REQUIRE_FALSE(signal.offset);
    }
  }
  REQUIRE(positives == 100);
}

TEST_CASE("generator is deterministic per seed") {
  SyntheticConfig config;
  config.num_docs = 20;
  const auto a = generate_synthetic_corpus(config, 3);
  const auto b = generate_synthetic_corpus(config, 3);
  const auto c = generate_synthetic_corpus(config, 4);
  for (std::size_t i = 0; i < a.notes.size(); ++i) {
    REQUIRE(a.notes[i].assembled_text() == b.notes[i].assembled_text());
  }
  REQUIRE(a.notes[0].assembled_text() != c.notes[0].assembled_text());
}

TEST_CASE("planted offset matches the token stream") {
  SyntheticConfig config;
  config.num_docs = 30;
  config.min_tokens = 100;
  config.max_tokens = 300;
  const auto corpus = generate_synthetic_corpus(config, 11);
  for (std::size_t i = 0; i < corpus.notes.size(); ++i) {
    if (!corpus.signals[i].offset) continue;
    const auto tokens = normalize_tokens(corpus.notes[i].assembled_text());
    for (std::size_t k = 0; k < config.signal_length; ++k) {
      REQUIRE(tokens[*corpus.signals[i].offset + k] == corpus.patterns[1][k]);
    }
  }
}

TEST_CASE("uniform placement is uniform over offset deciles") {
  SyntheticConfig config;
  config.num_docs = 10000;
  config.class_balance = 1.0;
  config.min_tokens = 100;
  config.max_tokens = 200;
  const auto corpus = generate_synthetic_corpus(config, 2024);
  std::array<double, 10> counts{};
  for (std::size_t i = 0; i < corpus.notes.size(); ++i) {
    const auto len = normalize_tokens(corpus.notes[i].assembled_text()).size();
    const double slots = static_cast<double>(len - config.signal_length + 1);
    const auto decile = static_cast<std::size_t>(10.0 * static_cast<double>(*corpus.signals[i].offset) / slots);
    counts[std::min<std::size_t>(decile, 9)] += 1.0;
  }
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
  // Critical value of chi-square with 9 degrees of freedom at alpha = 0.01.
  REQUIRE(chi2 < 21.666);
}

TEST_CASE("four-class corpora map to length-of-stay bins") {
  SyntheticConfig config;
  config.num_docs = 40;
  config.num_classes = 4;
  const auto corpus = generate_synthetic_corpus(config, 1);
  const auto task = TaskSpec::length_of_stay();
  std::array<int, 4> seen{};
  for (std::size_t i = 0; i < corpus.notes.size(); ++i) {
    const int label = corpus.signals[i].label;
    REQUIRE(corpus.notes[i].label_for(task) == label);
    ++seen[static_cast<std::size_t>(label)];
    for (int c = 1; c < 4; ++c) {
      const auto hits = count_pattern_occurrences(corpus.notes[i].assembled_text(),
                                                  corpus.patterns[static_cast<std::size_t>(c)]);
      REQUIRE(hits == (c == label ? 1u : 0u));
    }
  }
  for (int n : seen) REQUIRE(n == 10);
}

TEST_CASE("straddle placement crosses period boundaries at the requested rate") {
  SyntheticConfig config;
  config.num_docs = 2000;
  config.class_balance = 1.0;
  config.signal_length = 60;
  config.placement = SignalPlacement::Straddle;
  config.straddle_probability = 0.5;
  config.straddle_period = 460;
  const auto corpus = generate_synthetic_corpus(config, 9);
  std::size_t straddling = 0;
  for (const auto& s : corpus.signals) {
    const auto first = *s.offset / 460, last = (*s.offset + 59) / 460;
    straddling += first != last;
  }
  REQUIRE(straddling > 900);
  REQUIRE(straddling < 1100);
}

TEST_CASE("decoys never complete a pattern") {
  SyntheticConfig config;
  config.num_docs = 100;
  config.decoy_rate = 0.3;
  config.signal_length = 2;
  config.min_tokens = 200;
  config.max_tokens = 300;
  const auto corpus = generate_synthetic_corpus(config, 5);
  for (std::size_t i = 0; i < corpus.notes.size(); ++i) {
    const auto hits = count_pattern_occurrences(corpus.notes[i].assembled_text(), corpus.patterns[1]);
    REQUIRE(hits == (corpus.signals[i].label == 1 ? 1u : 0u));
  }
}

TEST_CASE("generator config validation") {
  SyntheticConfig config;
  config.min_tokens = 3;
  config.max_tokens = 10;
  REQUIRE_THROWS_AS(config.validate(), ConfigError);
  config = {};
  config.num_classes = 3;
  REQUIRE_THROWS_AS(config.validate(), ConfigError);
  config = {};
  const auto back = SyntheticConfig::from_json(config.to_json());
  REQUIRE(back.to_json() == config.to_json());
}
