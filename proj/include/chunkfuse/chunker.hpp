#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "chunkfuse/tokenizer.hpp"

namespace chunkfuse {

// Content tokens per chunk and tokens shared by consecutive chunks. The
// defaults frame to 512 ids, the input limit of BERT-family encoders.
struct ChunkingConfig {
  std::size_t capacity = 510;
  std::size_t overlap = 50;

  std::size_t stride() const { return capacity - overlap; }
  std::size_t framed_length() const { return capacity + 2; }
  // Throws ConfigError unless 0 <= overlap < capacity.
  void validate() const;
};

struct Chunk {
  std::vector<TokenId> framed_ids;  // CLS, content..., SEP
  std::size_t span_begin = 0;       // [span_begin, span_end) into the parent sequence
  std::size_t span_end = 0;
  std::size_t index = 0;

  std::size_t content_length() const { return span_end - span_begin; }
  std::span<const TokenId> content() const {
    return std::span<const TokenId>(framed_ids).subspan(1, framed_ids.size() - 2);
  }
};

// Windows of `capacity` tokens advancing by capacity - overlap, left to right,
// stopping at the first window that reaches the end of the sequence. An empty
// sequence yields a single [CLS, SEP] chunk.
std::vector<Chunk> chunk_tokens(const TokenSequence& tokens, const ChunkingConfig& config,
                                const SpecialIds& specials);

// 1 if m <= capacity, else ceil((m - capacity) / stride) + 1.
std::size_t expected_chunk_count(std::size_t num_tokens, const ChunkingConfig& config);

// True iff spans are sorted by start and their union is exactly [0, m).
bool coverage_check(const TokenSequence& tokens, std::span<const Chunk> chunks);

nlohmann::json chunk_to_json(const Chunk& chunk);

}  // namespace chunkfuse
