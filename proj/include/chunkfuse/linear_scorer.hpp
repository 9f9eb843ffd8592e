#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "chunkfuse/chunker.hpp"
#include "chunkfuse/fusion.hpp"
#include "chunkfuse/scoring.hpp"

namespace chunkfuse {

// Sparse bag of token-id counts, sorted by id, specials excluded.
struct SparseFeatures {
  std::vector<std::pair<std::uint32_t, double>> entries;
};

SparseFeatures bag_of_tokens(std::span<const TokenId> ids, const SpecialIds& specials,
                             std::size_t vocab_size);

// Multinomial logistic regression over bag-of-token features.
struct LinearModel {
  int num_classes = 2;
  std::size_t num_features = 0;
  std::vector<double> weights;  // num_classes x num_features, row-major
  std::vector<double> bias;     // num_classes

  LinearModel() = default;
  LinearModel(int num_classes, std::size_t num_features);  // all zeros

  void logits(const SparseFeatures& x, std::span<double> out) const;
  ProbabilityVector predict(const SparseFeatures& x) const;
};

struct LossAndGradient {
  double loss = 0.0;               // mean cross-entropy
  std::vector<double> d_weights;   // same layout as LinearModel::weights
  std::vector<double> d_bias;
};

// Mean cross-entropy over the examples and its analytic gradient.
LossAndGradient cross_entropy_gradient(const LinearModel& model,
                                       std::span<const SparseFeatures> examples,
                                       std::span<const int> labels);

// Defaults follow the fine-tuning protocol (decay, accumulation, warmup,
// early stopping), with a learning rate scaled for a linear model.
struct TrainerConfig {
  double learning_rate = 1e-2;
  double weight_decay = 0.01;
  int max_epochs = 200;
  double early_stop_delta = 1e-4;
  int early_stop_patience = 3;
  int accumulation_steps = 10;
  int warmup_steps = 50;
  int batch_size = 18;
  std::uint64_t seed = 0;

  // The encoder fine-tuning values (learning rate 1e-5), kept for operators
  // driving remote transformer backends.
  static TrainerConfig transformer_preset();

  void validate() const;
  static TrainerConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Linear warmup from 0 to peak over warmup_steps, then linear decay to 0 at
// total_steps.
class WarmupLinearSchedule {
 public:
  WarmupLinearSchedule(double peak, long warmup_steps, long total_steps);
  double rate(long step) const;
  long total_steps() const { return total_; }

 private:
  double peak_;
  long warmup_;
  long total_;
};

// Patience-based stopping on a maximized score. An epoch counts as an
// improvement when it beats the last improving score by at least min_delta.
class EarlyStopping {
 public:
  EarlyStopping(double min_delta, int patience);

  // Records one epoch's score; returns true when training should stop.
  bool update(double score);

  int epochs_without_improvement() const { return wait_; }
  double reference() const { return reference_; }

 private:
  double min_delta_;
  int patience_;
  int wait_ = 0;
  bool started_ = false;
  double reference_ = 0.0;
};

class LinearScorer final : public ChunkScorer {
 public:
  LinearScorer(std::string id, LinearModel model, SpecialIds specials);

  const ScorerDescriptor& descriptor() const override { return descriptor_; }
  ProbabilityVector score(const Chunk& chunk) const override;

  const LinearModel& model() const { return model_; }

  // {scorer_id, vocab_size, num_classes, weights, bias, trainer_config,
  //  best_val_auroc}
  nlohmann::json checkpoint_json(const TrainerConfig& trainer, double best_val_auroc) const;
  void save_checkpoint(const std::filesystem::path& path, const TrainerConfig& trainer,
                       double best_val_auroc) const;
  static LinearScorer load_checkpoint(const std::filesystem::path& path, const SpecialIds& specials);
  static LinearScorer from_checkpoint_json(const nlohmann::json& j, const SpecialIds& specials);

 private:
  ScorerDescriptor descriptor_;
  LinearModel model_;
  SpecialIds specials_;
};

// Chunks of one note, all carrying the note's label.
struct LabeledNoteChunks {
  std::string note_id;
  std::vector<Chunk> chunks;
  int label = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_auroc = 0.0;
  double learning_rate = 0.0;  // at the end of the epoch
  long optimizer_steps = 0;
};

struct TrainingResult {
  LinearScorer scorer;
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_val_auroc = 0.0;
  bool stopped_early = false;
};

struct TrainingProblem {
  std::string scorer_id;
  int num_classes = 2;
  std::size_t vocab_size = 0;
  SpecialIds specials;
};

// AdamW on mean cross-entropy over chunks, gradients accumulated over
// accumulation_steps mini-batches, warmup/decay schedule, validation macro
// AUROC of the fused note predictions after each epoch, early stopping, and
// the best-AUROC parameters returned. `fusion` must describe a single model.
// Throws DataError for an empty training set and NumericDivergenceError when
// the loss stops being finite.
TrainingResult train_linear_scorer(std::span<const LabeledNoteChunks> train,
                                   std::span<const LabeledNoteChunks> validation,
                                   const TrainerConfig& config, const FusionSpec& fusion,
                                   const TrainingProblem& problem);

nlohmann::json training_log_to_json(const TrainingResult& result);

}  // namespace chunkfuse
