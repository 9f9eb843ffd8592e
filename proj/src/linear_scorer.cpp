#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "chunkfuse/error.hpp"
#include "chunkfuse/linear_scorer.hpp"

namespace chunkfuse {

SparseFeatures bag_of_tokens(std::span<const TokenId> ids, const SpecialIds& specials,
                             std::size_t vocab_size) {
  std::vector<std::uint32_t> sorted;
  sorted.reserve(ids.size());
  for (TokenId id : ids) {
    if (id < 0 || specials.is_special(id) || static_cast<std::size_t>(id) >= vocab_size) continue;
    sorted.push_back(static_cast<std::uint32_t>(id));
  }
  std::sort(sorted.begin(), sorted.end());
  SparseFeatures x;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    x.entries.emplace_back(sorted[i], static_cast<double>(j - i));
    i = j;
  }
  return x;
}

LinearModel::LinearModel(int k, std::size_t features)
    : num_classes(k),
      num_features(features),
      weights(static_cast<std::size_t>(k) * features, 0.0),
      bias(static_cast<std::size_t>(k), 0.0) {
  if (k < 2) throw ContractError("linear model needs at least two classes");
}

void LinearModel::logits(const SparseFeatures& x, std::span<double> out) const {
  for (int c = 0; c < num_classes; ++c) {
    const auto cu = static_cast<std::size_t>(c);
    const double* row = weights.data() + cu * num_features;
    double z = bias[cu];
    for (const auto& [f, v] : x.entries) z += row[f] * v;
    out[cu] = z;
  }
}

namespace {

// In-place softmax; returns log-sum-exp of the input.
double softmax_inplace(std::span<double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return mx + std::log(sum);
}

}  // namespace

ProbabilityVector LinearModel::predict(const SparseFeatures& x) const {
  std::vector<double> z(static_cast<std::size_t>(num_classes));
  logits(x, z);
  softmax_inplace(z);
  return ProbabilityVector{std::move(z)};
}

// ---------------------------------------------------------------------------

TrainerConfig TrainerConfig::transformer_preset() {
  TrainerConfig c;
  c.learning_rate = 1e-5;
  return c;
}

void TrainerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("trainer.learning_rate must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("trainer.weight_decay must be non-negative");
  if (max_epochs < 1) throw ConfigError("trainer.max_epochs must be at least 1");
  if (!(early_stop_delta >= 0.0)) throw ConfigError("trainer.early_stop_delta must be non-negative");
  if (early_stop_patience < 1) throw ConfigError("trainer.early_stop_patience must be at least 1");
  if (accumulation_steps < 1) throw ConfigError("trainer.accumulation_steps must be at least 1");
  if (warmup_steps < 0) throw ConfigError("trainer.warmup_steps must be non-negative");
  if (batch_size < 1) throw ConfigError("trainer.batch_size must be at least 1");
}

TrainerConfig TrainerConfig::from_json(const nlohmann::json& j) {
  TrainerConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.early_stop_delta = j.value("early_stop_delta", c.early_stop_delta);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.accumulation_steps = j.value("accumulation_steps", c.accumulation_steps);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  return c;
}

nlohmann::json TrainerConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"weight_decay", weight_decay},
          {"max_epochs", max_epochs},
          {"early_stop_delta", early_stop_delta},
          {"early_stop_patience", early_stop_patience},
          {"accumulation_steps", accumulation_steps},
          {"warmup_steps", warmup_steps},
          {"batch_size", batch_size},
          {"seed", seed}};
}

WarmupLinearSchedule::WarmupLinearSchedule(double peak, long warmup_steps, long total_steps)
    : peak_(peak), warmup_(warmup_steps), total_(std::max(total_steps, warmup_steps)) {}

double WarmupLinearSchedule::rate(long step) const {
  if (step < warmup_) return peak_ * static_cast<double>(step) / static_cast<double>(warmup_);
  if (total_ == warmup_) return step == warmup_ ? peak_ : 0.0;
  const double remaining = static_cast<double>(std::max(0L, total_ - step));
  return peak_ * remaining / static_cast<double>(total_ - warmup_);
}

EarlyStopping::EarlyStopping(double min_delta, int patience)
    : min_delta_(min_delta), patience_(patience) {}

bool EarlyStopping::update(double score) {
  if (!started_ || score - reference_ >= min_delta_) {
    started_ = true;
    reference_ = score;
    wait_ = 0;
    return false;
  }
  ++wait_;
  return wait_ >= patience_;
}

// ---------------------------------------------------------------------------

LinearScorer::LinearScorer(std::string id, LinearModel model, SpecialIds specials)
    : model_(std::move(model)), specials_(specials) {
  descriptor_.scorer_id = std::move(id);
  descriptor_.kind = ScorerKind::Linear;
  descriptor_.num_classes = model_.num_classes;
}

ProbabilityVector LinearScorer::score(const Chunk& chunk) const {
  return model_.predict(bag_of_tokens(chunk.content(), specials_, model_.num_features));
}

nlohmann::json LinearScorer::checkpoint_json(const TrainerConfig& trainer,
                                             double best_val_auroc) const {
  return {{"scorer_id", descriptor_.scorer_id},
          {"vocab_size", model_.num_features},
          {"num_classes", model_.num_classes},
          {"weights", model_.weights},
          {"bias", model_.bias},
          {"trainer_config", trainer.to_json()},
          {"best_val_auroc", best_val_auroc}};
}

void LinearScorer::save_checkpoint(const std::filesystem::path& path, const TrainerConfig& trainer,
                                   double best_val_auroc) const {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write checkpoint {}", path.string()));
  out << checkpoint_json(trainer, best_val_auroc).dump() << '\n';
  if (!out) throw IoError(fmt::format("write to {} failed", path.string()));
}

LinearScorer LinearScorer::from_checkpoint_json(const nlohmann::json& j, const SpecialIds& specials) {
  try {
    LinearModel model(j.at("num_classes").get<int>(), j.at("vocab_size").get<std::size_t>());
    model.weights = j.at("weights").get<std::vector<double>>();
    model.bias = j.at("bias").get<std::vector<double>>();
    if (model.weights.size() != static_cast<std::size_t>(model.num_classes) * model.num_features ||
        model.bias.size() != static_cast<std::size_t>(model.num_classes)) {
      throw DataError("checkpoint parameter shapes do not match vocab_size x num_classes");
    }
    return LinearScorer(j.value("scorer_id", std::string("linear")), std::move(model), specials);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("malformed checkpoint: {}", e.what()));
  }
}

LinearScorer LinearScorer::load_checkpoint(const std::filesystem::path& path,
                                           const SpecialIds& specials) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open checkpoint {}", path.string()));
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return from_checkpoint_json(j, specials);
}

}  // namespace chunkfuse
