#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace chunkfuse {

using TokenId = std::int32_t;

struct SpecialIds {
  TokenId pad = 0;
  TokenId unk = 1;
  TokenId cls = 2;
  TokenId sep = 3;

  bool is_special(TokenId id) const { return id == pad || id == unk || id == cls || id == sep; }
};

inline constexpr std::size_t kNumSpecialTokens = 4;

// Dense token <-> id bijection. Ids 0..3 are [PAD] [UNK] [CLS] [SEP]; text
// tokens follow in descending frequency order.
class Vocabulary {
 public:
  // Specials only.
  Vocabulary();

  // Most frequent normalized tokens of the corpus, up to max_size entries
  // including the four specials; frequency ties go to the lexicographically
  // smaller token. Throws ConfigError if max_size < 4.
  static Vocabulary build(std::span<const std::string> corpus, std::size_t max_size);

  // Line-oriented file: one token per line, line number (0-based) = id, the
  // first four lines holding the special tokens.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  const SpecialIds& special_ids() const { return specials_; }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  // UNK for unknown tokens.
  TokenId id_of(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.contains(token); }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  SpecialIds specials_;
};

struct TokenSequence {
  std::vector<TokenId> ids;
  std::string source_note;
};

// Whitespace split, ASCII lowercase, ASCII punctuation removed; tokens that
// become empty are dropped.
std::vector<std::string> normalize_tokens(std::string_view text);

// Anything that turns text into a TokenSequence free of CLS/SEP/PAD ids. A
// subword implementation can replace the reference one behind this interface.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual TokenSequence tokenize(std::string_view text, std::string source_note = {}) const = 0;
  virtual const SpecialIds& special_ids() const = 0;
  virtual std::size_t vocab_size() const = 0;
};

class WhitespaceTokenizer final : public Tokenizer {
 public:
  explicit WhitespaceTokenizer(std::shared_ptr<const Vocabulary> vocab) : vocab_(std::move(vocab)) {}

  TokenSequence tokenize(std::string_view text, std::string source_note = {}) const override;
  const SpecialIds& special_ids() const override { return vocab_->special_ids(); }
  std::size_t vocab_size() const override { return vocab_->size(); }
  const Vocabulary& vocabulary() const { return *vocab_; }

 private:
  std::shared_ptr<const Vocabulary> vocab_;
};

// Reference tokenization: normalized tokens mapped through vocab, OOV -> UNK.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, std::string source_note = {});

}  // namespace chunkfuse
