#include "chunkfuse/chunker.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "chunkfuse/error.hpp"

namespace chunkfuse {

void ChunkingConfig::validate() const {
  if (capacity < 1) throw ConfigError("chunk capacity must be at least 1");
  if (overlap >= capacity) {
    throw ConfigError(fmt::format("chunk overlap {} must be smaller than capacity {}", overlap, capacity));
  }
}

std::vector<Chunk> chunk_tokens(const TokenSequence& tokens, const ChunkingConfig& config,
                                const SpecialIds& specials) {
  config.validate();
  const auto& ids = tokens.ids;
  const std::size_t m = ids.size();
  const std::size_t stride = config.stride();

  std::vector<Chunk> chunks;
  chunks.reserve(expected_chunk_count(m, config));
  std::size_t begin = 0;
  for (;;) {
    const std::size_t end = std::min(begin + config.capacity, m);
    Chunk c;
    c.index = chunks.size();
    c.span_begin = begin;
    c.span_end = end;
    c.framed_ids.reserve(end - begin + 2);
    c.framed_ids.push_back(specials.cls);
    c.framed_ids.insert(c.framed_ids.end(), ids.begin() + static_cast<std::ptrdiff_t>(begin),
                        ids.begin() + static_cast<std::ptrdiff_t>(end));
    c.framed_ids.push_back(specials.sep);
    chunks.push_back(std::move(c));
    if (end >= m) break;
    begin += stride;
  }
  return chunks;
}

std::size_t expected_chunk_count(std::size_t num_tokens, const ChunkingConfig& config) {
  if (num_tokens <= config.capacity) return 1;
  const std::size_t stride = config.stride();
  return (num_tokens - config.capacity + stride - 1) / stride + 1;
}

bool coverage_check(const TokenSequence& tokens, std::span<const Chunk> chunks) {
  const std::size_t m = tokens.ids.size();
  if (chunks.empty()) return false;
  std::size_t covered = 0;  // [0, covered) is covered so far
  std::size_t prev_begin = 0;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto& c = chunks[i];
    if (c.span_begin > c.span_end || c.span_end > m) return false;
    if (i > 0 && c.span_begin < prev_begin) return false;
    if (c.span_begin > covered) return false;
    covered = std::max(covered, c.span_end);
    prev_begin = c.span_begin;
  }
  return covered == m;
}

nlohmann::json chunk_to_json(const Chunk& chunk) {
  return {{"index", chunk.index},
          {"span", {chunk.span_begin, chunk.span_end}},
          {"framed_ids", chunk.framed_ids}};
}

}  // namespace chunkfuse
