#include "chunkfuse/fusion.hpp"

#include <numeric>

#include <fmt/format.h>

#include "chunkfuse/error.hpp"

namespace chunkfuse {
namespace {

void require_same_classes(const ProbabilityVector& v, int num_classes) {
  if (v.num_classes() != num_classes) {
    throw ContractError(
        fmt::format("class-count mismatch: expected {}, got {}", num_classes, v.num_classes()));
  }
}

template <typename E>
[[noreturn]] void rethrow_with_context(const E& e, const std::string& context);

template <>
[[noreturn]] void rethrow_with_context(const TransportError& e, const std::string& context) {
  throw TransportError(fmt::format("{}: {}", context, e.what()), e.http_status(), e.attempts(),
                       e.retryable());
}

template <>
[[noreturn]] void rethrow_with_context(const ProtocolError& e, const std::string& context) {
  throw ProtocolError(fmt::format("{}: {}", context, e.what()));
}

template <>
[[noreturn]] void rethrow_with_context(const ContractError& e, const std::string& context) {
  throw ContractError(fmt::format("{}: {}", context, e.what()));
}

}  // namespace

PredictionMatrix::PredictionMatrix(std::string note_id,
                                   std::vector<std::vector<ProbabilityVector>> rows)
    : note_id_(std::move(note_id)), num_chunks_(rows.size()) {
  if (rows.empty()) throw ContractError("prediction matrix needs at least one chunk");
  num_models_ = rows.front().size();
  if (num_models_ == 0) throw ContractError("prediction matrix needs at least one model");
  num_classes_ = rows.front().front().num_classes();
  entries_.reserve(num_chunks_ * num_models_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != num_models_) {
      throw ContractError(fmt::format("ragged prediction matrix: chunk {} has {} models, expected {}",
                                      i, rows[i].size(), num_models_));
    }
    for (auto& v : rows[i]) {
      require_same_classes(v, num_classes_);
      entries_.push_back(std::move(v));
    }
  }
}

std::vector<ProbabilityVector> PredictionMatrix::column(std::size_t model) const {
  std::vector<ProbabilityVector> out;
  out.reserve(num_chunks_);
  for (std::size_t i = 0; i < num_chunks_; ++i) out.push_back(at(i, model));
  return out;
}

PredictionMatrix PredictionMatrix::select(std::span<const std::size_t> chunks,
                                          std::span<const std::size_t> models) const {
  std::vector<std::vector<ProbabilityVector>> rows;
  rows.reserve(chunks.size());
  for (auto i : chunks) {
    auto& row = rows.emplace_back();
    for (auto j : models) row.push_back(at(i, j));
  }
  return PredictionMatrix(note_id_, std::move(rows));
}

FusionSpec FusionSpec::uniform(std::size_t num_models, bool with_overlap) {
  return FusionSpec{std::vector<double>(num_models, 1.0 / static_cast<double>(num_models)),
                    AggregationKind::Mean, with_overlap};
}

std::vector<double> FusionSpec::effective_weights(std::size_t num_models) const {
  if (num_models == 0) throw ContractError("fusion needs at least one model");
  if (aggregation == AggregationKind::Mean) {
    if (!model_weights.empty() && model_weights.size() != num_models) {
      throw ContractError(fmt::format("fusion spec describes {} models, matrix has {}",
                                      model_weights.size(), num_models));
    }
    return std::vector<double>(num_models, 1.0 / static_cast<double>(num_models));
  }
  if (model_weights.size() != num_models) {
    throw ContractError(fmt::format("fusion spec has {} weights for {} models",
                                    model_weights.size(), num_models));
  }
  double total = 0.0;
  for (double w : model_weights) {
    if (!(w >= 0.0)) throw ContractError("model weights must be non-negative");
    total += w;
  }
  if (total <= 0.0) throw ContractError("model weights sum to zero");
  std::vector<double> out(model_weights);
  for (double& w : out) w /= total;
  return out;
}

FusionSpec FusionSpec::from_json(const nlohmann::json& j) {
  FusionSpec spec;
  spec.model_weights = j.value("model_weights", std::vector<double>{});
  const auto agg = j.value("aggregation", std::string(spec.model_weights.empty() ? "mean" : "weighted"));
  if (agg == "mean") {
    spec.aggregation = AggregationKind::Mean;
  } else if (agg == "weighted") {
    spec.aggregation = AggregationKind::Weighted;
  } else {
    throw ConfigError(fmt::format("unknown aggregation '{}'", agg));
  }
  spec.with_overlap = j.value("with_overlap", true);
  return spec;
}

nlohmann::json FusionSpec::to_json() const {
  return {{"model_weights", model_weights},
          {"aggregation", aggregation == AggregationKind::Mean ? "mean" : "weighted"},
          {"with_overlap", with_overlap}};
}

ProbabilityVector aggregate_chunks(std::span<const ProbabilityVector> preds) {
  if (preds.empty()) throw ContractError("cannot aggregate an empty prediction list");
  const int k = preds.front().num_classes();
  std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
  for (const auto& p : preds) {
    require_same_classes(p, k);
    for (std::size_t c = 0; c < sum.size(); ++c) sum[c] += p.probs[c];
  }
  const auto n = static_cast<double>(preds.size());
  for (double& s : sum) s /= n;
  return ProbabilityVector{std::move(sum)};
}

NotePrediction weighted_fuse(const PredictionMatrix& matrix, const FusionSpec& spec,
                             std::span<const double> chunk_weights) {
  const auto weights = spec.effective_weights(matrix.num_models());
  const auto k = static_cast<std::size_t>(matrix.num_classes());
  const std::size_t n = matrix.num_chunks();

  // Empty row_weights means the plain mean, computed as sum / n so that
  // one-hot model weights reproduce aggregate_chunks bit for bit.
  std::vector<double> row_weights;
  if (!chunk_weights.empty()) {
    if (chunk_weights.size() != n) {
      throw ContractError(
          fmt::format("{} chunk weights for {} chunks", chunk_weights.size(), n));
    }
    const double total = std::accumulate(chunk_weights.begin(), chunk_weights.end(), 0.0);
    if (!(total > 0.0)) throw ContractError("chunk weights sum to zero");
    for (double w : chunk_weights) {
      if (!(w >= 0.0)) throw ContractError("chunk weights must be non-negative");
      row_weights.push_back(w / total);
    }
  }

  std::vector<double> fused(k, 0.0);
  std::vector<double> chunk_combo(k);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(chunk_combo.begin(), chunk_combo.end(), 0.0);
    for (std::size_t j = 0; j < matrix.num_models(); ++j) {
      const auto& p = matrix.at(i, j).probs;
      for (std::size_t c = 0; c < k; ++c) chunk_combo[c] += weights[j] * p[c];
    }
    const double rw = row_weights.empty() ? 1.0 : row_weights[i];
    for (std::size_t c = 0; c < k; ++c) fused[c] += rw * chunk_combo[c];
  }
  if (row_weights.empty()) {
    for (double& f : fused) f /= static_cast<double>(n);
  }

  NotePrediction out;
  out.note_id = matrix.note_id();
  out.fused = ProbabilityVector{std::move(fused)};
  out.num_chunks = n;
  out.fusion_spec = spec;
  for (std::size_t j = 0; j < matrix.num_models(); ++j) {
    out.per_model_aggregates.push_back(aggregate_chunks(matrix.column(j)));
  }
  out.per_chunk = matrix;
  return out;
}

NotePrediction ensemble_fuse(const PredictionMatrix& matrix) {
  NotePrediction out;
  out.note_id = matrix.note_id();
  out.num_chunks = matrix.num_chunks();
  out.fusion_spec = FusionSpec::uniform(matrix.num_models());
  for (std::size_t j = 0; j < matrix.num_models(); ++j) {
    out.per_model_aggregates.push_back(aggregate_chunks(matrix.column(j)));
  }
  out.fused = aggregate_chunks(out.per_model_aggregates);
  out.per_chunk = matrix;
  return out;
}

PredictionMatrix score_chunks(const std::string& note_id, std::span<const Chunk> chunks,
                              std::span<const ChunkScorer* const> scorers) {
  if (scorers.empty()) throw ContractError("no scorers supplied");
  const int k = scorers.front()->num_classes();
  std::vector<std::vector<ProbabilityVector>> rows(chunks.size());
  for (const ChunkScorer* scorer : scorers) {
    const auto context = fmt::format("note {} ({} chunks), scorer {}", note_id, chunks.size(),
                                     scorer->id());
    if (scorer->num_classes() != k) {
      throw ContractError(fmt::format("{}: {} classes, ensemble uses {}", context,
                                      scorer->num_classes(), k));
    }
    std::vector<ProbabilityVector> scores;
    try {
      scores = scorer->score_batch(chunks);
    } catch (const TransportError& e) {
      rethrow_with_context(e, context);
    } catch (const ProtocolError& e) {
      rethrow_with_context(e, context);
    } catch (const ContractError& e) {
      rethrow_with_context(e, context);
    }
    if (scores.size() != chunks.size()) {
      throw ContractError(fmt::format("{}: {} predictions for {} chunks", context, scores.size(),
                                      chunks.size()));
    }
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      if (scores[i].num_classes() != k || !is_simplex(scores[i].probs)) {
        throw ContractError(fmt::format("{}: chunk {} produced an invalid probability vector",
                                        context, chunks[i].index));
      }
      rows[i].push_back(std::move(scores[i]));
    }
  }
  return PredictionMatrix(note_id, std::move(rows));
}

NotePrediction predict_note(const ClinicalNote& note, std::span<const ChunkScorer* const> scorers,
                            const ChunkingConfig& chunking, const FusionSpec& fusion,
                            const Tokenizer& tokenizer) {
  const auto tokens = tokenizer.tokenize(note.assembled_text(), note.note_id());
  const auto chunks = chunk_tokens(tokens, chunking, tokenizer.special_ids());
  return weighted_fuse(score_chunks(note.note_id(), chunks, scorers), fusion);
}

NotePrediction truncation_baseline(const ClinicalNote& note,
                                   std::span<const ChunkScorer* const> scorers,
                                   const ChunkingConfig& chunking, const FusionSpec& fusion,
                                   const Tokenizer& tokenizer) {
  auto tokens = tokenizer.tokenize(note.assembled_text(), note.note_id());
  if (tokens.ids.size() > chunking.capacity) tokens.ids.resize(chunking.capacity);
  const auto chunks = chunk_tokens(tokens, chunking, tokenizer.special_ids());
  return weighted_fuse(score_chunks(note.note_id(), std::span(chunks).first(1), scorers), fusion);
}

nlohmann::json prediction_to_json(const NotePrediction& p) {
  nlohmann::json per_model = nlohmann::json::array();
  for (const auto& v : p.per_model_aggregates) per_model.push_back(v.probs);
  return {{"note_id", p.note_id},
          {"fused", p.fused.probs},
          {"per_model", per_model},
          {"num_chunks", p.num_chunks},
          {"fusion_spec", p.fusion_spec.to_json()}};
}

}  // namespace chunkfuse
