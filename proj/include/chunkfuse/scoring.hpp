#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "chunkfuse/chunker.hpp"

namespace chunkfuse {

inline constexpr double kSimplexTolerance = 1e-6;

// True when every entry is in [0, 1] and the entries sum to 1 within tol.
bool is_simplex(std::span<const double> probs, double tol = kSimplexTolerance);

// Class-probability vector. Construction through checked() validates the
// simplex constraint.
struct ProbabilityVector {
  std::vector<double> probs;

  // Throws ContractError unless probs is simplex-valid and non-empty.
  static ProbabilityVector checked(std::vector<double> probs);
  static ProbabilityVector uniform(int num_classes);

  int num_classes() const { return static_cast<int>(probs.size()); }
  double operator[](std::size_t c) const { return probs[c]; }
  bool operator==(const ProbabilityVector&) const = default;
};

enum class ScorerKind { Linear, Remote, Mock };

std::string_view scorer_kind_name(ScorerKind kind);
ScorerKind parse_scorer_kind(std::string_view name);

struct ScorerDescriptor {
  std::string scorer_id;
  ScorerKind kind = ScorerKind::Linear;
  int num_classes = 2;
  // Kind-specific settings: "endpoint" for remote scorers, "checkpoint" or
  // "seed" for linear ones, "table"/"default" (JSON text) for mocks.
  std::map<std::string, std::string> metadata;

  static ScorerDescriptor from_json(const nlohmann::json& j, int num_classes);
  nlohmann::json to_json() const;
};

// Maps a framed chunk to a class-probability vector. Implementations are
// immutable once constructed and safe to call concurrently.
class ChunkScorer {
 public:
  virtual ~ChunkScorer() = default;

  virtual const ScorerDescriptor& descriptor() const = 0;
  virtual ProbabilityVector score(const Chunk& chunk) const = 0;

  // One vector per chunk, in input order. Remote scorers override this to
  // batch requests.
  virtual std::vector<ProbabilityVector> score_batch(std::span<const Chunk> chunks) const;

  int num_classes() const { return descriptor().num_classes; }
  const std::string& id() const { return descriptor().scorer_id; }
};

// Table-driven scorer keyed by chunk index; chunks without an entry receive
// the default vector (uniform unless set).
class MockScorer final : public ChunkScorer {
 public:
  MockScorer(std::string id, int num_classes);
  MockScorer(std::string id, std::map<std::size_t, ProbabilityVector> table,
             ProbabilityVector fallback);

  // Reads "table" ({"<index>": [p...]}) and "default" ([p...]) from the
  // descriptor metadata.
  static MockScorer from_descriptor(const ScorerDescriptor& descriptor);

  const ScorerDescriptor& descriptor() const override { return descriptor_; }
  ProbabilityVector score(const Chunk& chunk) const override;

 private:
  ScorerDescriptor descriptor_;
  std::map<std::size_t, ProbabilityVector> table_;
  ProbabilityVector fallback_;
};

}  // namespace chunkfuse
