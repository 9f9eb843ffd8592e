#include "chunkfuse/tokenizer.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>

#include "chunkfuse/error.hpp"

namespace chunkfuse {
namespace {

constexpr std::array<std::string_view, kNumSpecialTokens> kSpecialTokens = {"[PAD]", "[UNK]",
                                                                             "[CLS]", "[SEP]"};

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_ascii_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
         (c >= 123 && c <= 126);
}

template <typename Fn>
void for_each_normalized(std::string_view text, Fn&& fn) {
  std::string current;
  const auto flush = [&] {
    if (!current.empty()) fn(current);
    current.clear();
  };
  for (unsigned char c : text) {
    if (is_space(c)) {
      flush();
    } else if (!is_ascii_punct(c)) {
      current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
    }
  }
  flush();
}

}  // namespace

Vocabulary::Vocabulary() {
  for (auto tok : kSpecialTokens) add(std::string(tok));
}

void Vocabulary::add(std::string token) {
  const auto id = static_cast<TokenId>(tokens_.size());
  const auto [it, inserted] = index_.emplace(token, id);
  if (!inserted) throw DataError(fmt::format("duplicate vocabulary token '{}'", token));
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(std::span<const std::string> corpus, std::size_t max_size) {
  if (max_size < kNumSpecialTokens) {
    throw ConfigError(fmt::format("vocabulary max_size {} leaves no room for special tokens", max_size));
  }
  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& text : corpus) {
    for_each_normalized(text, [&](const std::string& tok) { ++freq[tok]; });
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary vocab;
  const std::size_t keep = std::min(ranked.size(), max_size - kNumSpecialTokens);
  for (std::size_t i = 0; i < keep; ++i) vocab.add(std::move(ranked[i].first));
  return vocab;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open vocabulary {}", path.string()));
  Vocabulary vocab;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno < kNumSpecialTokens) {
      if (line != kSpecialTokens[lineno]) {
        throw DataError(fmt::format("{}:{}: expected special token {}, found '{}'", path.string(),
                                    lineno + 1, kSpecialTokens[lineno], line));
      }
    } else {
      vocab.add(line);
    }
    ++lineno;
  }
  if (lineno < kNumSpecialTokens) {
    throw DataError(fmt::format("{}: truncated special-token header", path.string()));
  }
  return vocab;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write vocabulary {}", path.string()));
  for (const auto& tok : tokens_) out << tok << '\n';
  if (!out) throw IoError(fmt::format("write to {} failed", path.string()));
}

TokenId Vocabulary::id_of(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? specials_.unk : it->second;
}

std::vector<std::string> normalize_tokens(std::string_view text) {
  std::vector<std::string> out;
  for_each_normalized(text, [&](const std::string& tok) { out.push_back(tok); });
  return out;
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, std::string source_note) {
  TokenSequence seq;
  seq.source_note = std::move(source_note);
  const auto& specials = vocab.special_ids();
  for_each_normalized(text, [&](const std::string& tok) {
    TokenId id = vocab.id_of(tok);
    // A literal special spelling cannot survive punctuation stripping, but
    // keep the guarantee local.
    if (specials.is_special(id)) id = specials.unk;
    seq.ids.push_back(id);
  });
  return seq;
}

TokenSequence WhitespaceTokenizer::tokenize(std::string_view text, std::string source_note) const {
  return chunkfuse::tokenize(text, *vocab_, std::move(source_note));
}

}  // namespace chunkfuse
