#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chunkfuse/chunker.hpp"
#include "chunkfuse/corpus.hpp"
#include "chunkfuse/scoring.hpp"
#include "chunkfuse/tokenizer.hpp"

namespace chunkfuse {

// Per-(chunk, model) predictions for one note, stored row-major: row i holds
// the vectors of every ensemble member for chunk i.
class PredictionMatrix {
 public:
  PredictionMatrix() = default;

  // Throws ContractError if rows are ragged, empty, or mix class counts.
  PredictionMatrix(std::string note_id, std::vector<std::vector<ProbabilityVector>> rows);

  const std::string& note_id() const { return note_id_; }
  std::size_t num_chunks() const { return num_chunks_; }
  std::size_t num_models() const { return num_models_; }
  int num_classes() const { return num_classes_; }
  const ProbabilityVector& at(std::size_t chunk, std::size_t model) const {
    return entries_[chunk * num_models_ + model];
  }

  // Predictions of one model across all chunks.
  std::vector<ProbabilityVector> column(std::size_t model) const;
  // Sub-matrix restricted to the given chunks (rows) and models (columns).
  PredictionMatrix select(std::span<const std::size_t> chunks,
                          std::span<const std::size_t> models) const;

 private:
  std::string note_id_;
  std::size_t num_chunks_ = 0;
  std::size_t num_models_ = 0;
  int num_classes_ = 0;
  std::vector<ProbabilityVector> entries_;
};

enum class AggregationKind { Mean, Weighted };

struct FusionSpec {
  // One non-negative weight per ensemble member. Ignored for Mean.
  std::vector<double> model_weights;
  AggregationKind aggregation = AggregationKind::Mean;
  bool with_overlap = true;

  static FusionSpec uniform(std::size_t num_models, bool with_overlap = true);

  // Weights actually applied to a matrix of num_models members: uniform for
  // Mean, the normalized model_weights for Weighted. Throws ContractError on
  // a count mismatch, negative weights, or an all-zero vector.
  std::vector<double> effective_weights(std::size_t num_models) const;

  static FusionSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct NotePrediction {
  std::string note_id;
  ProbabilityVector fused;
  std::vector<ProbabilityVector> per_model_aggregates;
  std::size_t num_chunks = 0;
  FusionSpec fusion_spec;
  std::optional<PredictionMatrix> per_chunk;
};

// Element-wise mean. Throws ContractError on an empty list or mixed class
// counts.
ProbabilityVector aggregate_chunks(std::span<const ProbabilityVector> preds);

// Convex combination across models within each chunk, then the plain mean
// over chunks. chunk_weights, when non-empty, replaces that mean by a
// normalized weighted mean over chunks.
NotePrediction weighted_fuse(const PredictionMatrix& matrix, const FusionSpec& spec,
                             std::span<const double> chunk_weights = {});

// Mean over models of each model's chunk mean.
NotePrediction ensemble_fuse(const PredictionMatrix& matrix);

// Scores every chunk with every scorer and assembles the matrix. Scorer
// failures are rethrown with the note and scorer attached.
PredictionMatrix score_chunks(const std::string& note_id, std::span<const Chunk> chunks,
                              std::span<const ChunkScorer* const> scorers);

// tokenize -> chunk -> score every (chunk, model) pair -> weighted_fuse.
NotePrediction predict_note(const ClinicalNote& note, std::span<const ChunkScorer* const> scorers,
                            const ChunkingConfig& chunking, const FusionSpec& fusion,
                            const Tokenizer& tokenizer);

// Scores only the first chunk (the leading `capacity` tokens), discarding
// the rest of the note. With several scorers their first-chunk predictions
// are fused with the spec's weights.
NotePrediction truncation_baseline(const ClinicalNote& note,
                                   std::span<const ChunkScorer* const> scorers,
                                   const ChunkingConfig& chunking, const FusionSpec& fusion,
                                   const Tokenizer& tokenizer);

nlohmann::json prediction_to_json(const NotePrediction& prediction);

}  // namespace chunkfuse
