#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "chunkfuse/corpus.hpp"
#include "chunkfuse/error.hpp"
#include "chunkfuse/tokenizer.hpp"

using namespace chunkfuse;

namespace {

Vocabulary vocab_of(std::vector<std::string> texts, std::size_t max_size) {
  return Vocabulary::build(texts, max_size);
}

}  // namespace

TEST_CASE("normalization lowercases, strips punctuation and drops empties") {
  REQUIRE(normalize_tokens("Chest, PAIN!  (chest) -- x.y") ==
          std::vector<std::string>{"chest", "pain", "chest", "xy"});
  REQUIRE(normalize_tokens("").empty());
  REQUIRE(normalize_tokens(" \t\n ... ").empty());
}

TEST_CASE("build keeps specials first, then tokens by frequency") {
  const auto v = vocab_of({"a b a"}, 6);
  REQUIRE(v.size() == 6);
  REQUIRE(v.token(0) == "[PAD]");
  REQUIRE(v.token(1) == "[UNK]");
  REQUIRE(v.token(2) == "[CLS]");
  REQUIRE(v.token(3) == "[SEP]");
  REQUIRE(v.token(4) == "a");
  REQUIRE(v.token(5) == "b");
}

TEST_CASE("frequency ties break lexicographically") {
  const auto v = vocab_of({"y x y x"}, 5);
  REQUIRE(v.size() == 5);
  REQUIRE(v.contains("x"));
  REQUIRE_FALSE(v.contains("y"));
  REQUIRE_THROWS_AS(vocab_of({"a"}, 3), ConfigError);
}

TEST_CASE("tokenize maps case-folded tokens and OOV to UNK") {
  const auto v = vocab_of({"chest pain"}, 10);
  const auto chest = v.id_of("chest"), pain = v.id_of("pain");
  REQUIRE(tokenize("", v).ids.empty());
  REQUIRE(tokenize("Chest PAIN chest", v).ids == std::vector<TokenId>{chest, pain, chest});
  REQUIRE(tokenize("zzzunseen chest", v).ids == std::vector<TokenId>{v.special_ids().unk, chest});
  // Literal special spellings lose their brackets and are ordinary words.
  const auto seq = tokenize("[CLS] [SEP] [PAD]", v);
  for (TokenId id : seq.ids) REQUIRE(id == v.special_ids().unk);
}

TEST_CASE("tokenize never emits framing ids and matches normalized length") {
  const auto v = vocab_of({"alpha beta gamma delta"}, 6);
  const std::string text = "Alpha, beta; GAMMA delta epsilon zeta alpha!";
  const auto seq = tokenize(text, v, "n1");
  REQUIRE(seq.source_note == "n1");
  REQUIRE(seq.ids.size() == normalize_tokens(text).size());
  for (TokenId id : seq.ids) {
    REQUIRE(id != v.special_ids().cls);
    REQUIRE(id != v.special_ids().sep);
    REQUIRE(id != v.special_ids().pad);
  }
  WhitespaceTokenizer tokenizer(std::make_shared<Vocabulary>(v));
  REQUIRE(tokenizer.tokenize(text).ids == seq.ids);
  REQUIRE(tokenizer.vocab_size() == v.size());
}

TEST_CASE("vocabulary file round-trip and header validation") {
  const auto v = vocab_of({"one two two three three three"}, 100);
  const auto dir = std::filesystem::temp_directory_path();
  const auto path = dir / "chunkfuse_vocab.txt";
  v.save(path);
  const auto back = Vocabulary::load(path);
  REQUIRE(back.size() == v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    REQUIRE(back.token(static_cast<TokenId>(i)) == v.token(static_cast<TokenId>(i)));
  }
  {
    std::ofstream bad(path);
    bad << "[PAD]\n[CLS]\n";
  }
  REQUIRE_THROWS_AS(Vocabulary::load(path), DataError);
  std::filesystem::remove(path);
  REQUIRE_THROWS_AS(Vocabulary::load(dir / "chunkfuse_missing_vocab.txt"), IoError);
}

TEST_CASE("planted signal tokens survive vocabulary truncation") {
  SyntheticConfig config;
  config.num_docs = 10000;
  config.min_tokens = 100;
  config.max_tokens = 200;
  const auto corpus = generate_synthetic_corpus(config, 13);
  std::vector<std::string> texts;
  for (const auto& n : corpus.notes) texts.push_back(n.assembled_text());
  const auto v = Vocabulary::build(texts, 5000);
  for (const auto& word : corpus.patterns[1]) REQUIRE(v.contains(word));
}
