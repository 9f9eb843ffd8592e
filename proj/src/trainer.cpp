#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "chunkfuse/error.hpp"
#include "chunkfuse/linear_scorer.hpp"
#include "chunkfuse/metrics.hpp"
#include "chunkfuse/rng.hpp"

namespace chunkfuse {
namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr double kInitScale = 0.01;

// Adds scale * d(loss)/d(params) over the selected examples into the
// accumulators and returns scale * sum of per-example losses.
double accumulate_gradient(const LinearModel& model, std::span<const SparseFeatures> xs,
                           std::span<const int> ys, std::span<const std::size_t> indices,
                           double scale,
                           std::vector<double>& d_weights, std::vector<double>& d_bias,
                           std::vector<double>& scratch) {
  const auto k = static_cast<std::size_t>(model.num_classes);
  scratch.resize(k);
  double loss = 0.0;
  for (std::size_t idx : indices) {
    const auto y = static_cast<std::size_t>(ys[idx]);
    model.logits(xs[idx], scratch);
    const double y_logit = scratch[y];
    const double mx = *std::max_element(scratch.begin(), scratch.end());
    double sum = 0.0;
    for (double& v : scratch) {
      v = std::exp(v - mx);
      sum += v;
    }
    loss += (mx + std::log(sum) - y_logit) * scale;
    for (std::size_t c = 0; c < k; ++c) {
      const double delta = (scratch[c] / sum - (c == y ? 1.0 : 0.0)) * scale;
      d_bias[c] += delta;
      double* row = d_weights.data() + c * model.num_features;
      for (const auto& [f, v] : xs[idx].entries) row[f] += delta * v;
    }
  }
  return loss;
}

class AdamW {
 public:
  AdamW(std::size_t num_weights, std::size_t num_bias, double weight_decay)
      : m_w_(num_weights, 0.0), v_w_(num_weights, 0.0), m_b_(num_bias, 0.0), v_b_(num_bias, 0.0),
        weight_decay_(weight_decay) {}

  // Decoupled decay applies to weights only, not biases.
  void step(LinearModel& model, std::span<const double> g_w, std::span<const double> g_b,
            double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t_));
    update(model.weights, m_w_, v_w_, g_w, lr, c1, c2, weight_decay_);
    update(model.bias, m_b_, v_b_, g_b, lr, c1, c2, 0.0);
  }

 private:
  static void update(std::vector<double>& p, std::vector<double>& m, std::vector<double>& v,
                     std::span<const double> g, double lr, double c1, double c2, double decay) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
      p[i] *= 1.0 - lr * decay;
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kAdamEps);
    }
  }

  std::vector<double> m_w_, v_w_, m_b_, v_b_;
  double weight_decay_;
  long t_ = 0;
};

}  // namespace

LossAndGradient cross_entropy_gradient(const LinearModel& model,
                                       std::span<const SparseFeatures> examples,
                                       std::span<const int> labels) {
  if (examples.size() != labels.size() || examples.empty()) {
    throw ContractError("gradient needs a non-empty batch with one label per example");
  }
  LossAndGradient g;
  g.d_weights.assign(model.weights.size(), 0.0);
  g.d_bias.assign(model.bias.size(), 0.0);
  std::vector<std::size_t> all(examples.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<double> scratch;
  g.loss = accumulate_gradient(model, examples, labels, all,
                               1.0 / static_cast<double>(examples.size()), g.d_weights, g.d_bias,
                               scratch);
  return g;
}

TrainingResult train_linear_scorer(std::span<const LabeledNoteChunks> train,
                                   std::span<const LabeledNoteChunks> validation,
                                   const TrainerConfig& config, const FusionSpec& fusion,
                                   const TrainingProblem& problem) {
  config.validate();
  (void)fusion.effective_weights(1);  // single-model spec required
  const int k = problem.num_classes;

  std::vector<SparseFeatures> xs;
  std::vector<int> ys;
  for (const auto& note : train) {
    if (note.label < 0 || note.label >= k) {
      throw DataError(fmt::format("note {}: label {} outside [0, {})", note.note_id, note.label, k));
    }
    for (const auto& chunk : note.chunks) {
      xs.push_back(bag_of_tokens(chunk.content(), problem.specials, problem.vocab_size));
      ys.push_back(note.label);
    }
  }
  if (xs.empty()) throw DataError("training set is empty");
  if (validation.empty()) throw DataError("validation set is empty");

  std::vector<std::vector<SparseFeatures>> val_features;
  std::vector<int> val_labels;
  for (const auto& note : validation) {
    auto& feats = val_features.emplace_back();
    for (const auto& chunk : note.chunks) {
      feats.push_back(bag_of_tokens(chunk.content(), problem.specials, problem.vocab_size));
    }
    if (feats.empty()) throw DataError(fmt::format("validation note {} has no chunks", note.note_id));
    val_labels.push_back(note.label);
  }

  LinearModel model(k, problem.vocab_size);
  {
    Rng init(config.seed, "init");
    for (double& w : model.weights) w = (2.0 * init.uniform() - 1.0) * kInitScale;
  }

  const auto batch = static_cast<std::size_t>(config.batch_size);
  const std::size_t batches_per_epoch = (xs.size() + batch - 1) / batch;
  const auto accum = static_cast<std::size_t>(config.accumulation_steps);
  const long steps_per_epoch = static_cast<long>((batches_per_epoch + accum - 1) / accum);
  const WarmupLinearSchedule schedule(config.learning_rate, config.warmup_steps,
                                      steps_per_epoch * config.max_epochs);

  AdamW optimizer(model.weights.size(), model.bias.size(), config.weight_decay);
  std::vector<double> acc_w(model.weights.size(), 0.0);
  std::vector<double> acc_b(model.bias.size(), 0.0);
  std::vector<double> scratch;
  std::size_t accumulated = 0;
  long step = 0;

  const auto apply_step = [&] {
    const double inv = 1.0 / static_cast<double>(accumulated);
    for (double& g : acc_w) g *= inv;
    for (double& g : acc_b) g *= inv;
    optimizer.step(model, acc_w, acc_b, schedule.rate(step));
    std::fill(acc_w.begin(), acc_w.end(), 0.0);
    std::fill(acc_b.begin(), acc_b.end(), 0.0);
    accumulated = 0;
    ++step;
  };

  const FusionSpec single = FusionSpec::uniform(1, fusion.with_overlap);
  const auto validate_auroc = [&] {
    std::vector<ProbabilityVector> fused;
    fused.reserve(val_features.size());
    for (std::size_t n = 0; n < val_features.size(); ++n) {
      std::vector<std::vector<ProbabilityVector>> rows;
      for (const auto& x : val_features[n]) rows.push_back({model.predict(x)});
      fused.push_back(weighted_fuse(PredictionMatrix(validation[n].note_id, std::move(rows)), single)
                          .fused);
    }
    return macro_auroc(fused, val_labels, k).macro_auc;
  };

  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle(config.seed, "shuffle");
  EarlyStopping stopper(config.early_stop_delta, config.early_stop_patience);

  TrainingResult result{LinearScorer(problem.scorer_id, model, problem.specials), {}, 0, 0.0, false};
  bool have_best = false;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const auto begin = b * batch;
      const auto idx = std::span<const std::size_t>(order).subspan(
          begin, std::min(batch, xs.size() - begin));
      const double loss = accumulate_gradient(model, xs, ys, idx,
                                              1.0 / static_cast<double>(idx.size()), acc_w, acc_b,
                                              scratch);
      if (!std::isfinite(loss)) {
        throw NumericDivergenceError(
            fmt::format("non-finite training loss at optimizer step {} (epoch {}, batch {})", step,
                        epoch, b),
            step);
      }
      epoch_loss += loss;
      if (++accumulated == accum) apply_step();
    }
    if (accumulated > 0) apply_step();

    const double auroc = validate_auroc();
    result.log.push_back({epoch, epoch_loss / static_cast<double>(batches_per_epoch), auroc,
                          schedule.rate(step), step});
    spdlog::debug("{} epoch {}: loss {:.5f} val macro-AUROC {:.5f}", problem.scorer_id, epoch,
                  result.log.back().train_loss, auroc);

    if (!have_best || auroc > result.best_val_auroc) {
      have_best = true;
      result.best_val_auroc = auroc;
      result.best_epoch = epoch;
      result.scorer = LinearScorer(problem.scorer_id, model, problem.specials);
    }
    if (stopper.update(auroc)) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

nlohmann::json training_log_to_json(const TrainingResult& result) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : result.log) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_auroc", e.val_auroc},
                      {"learning_rate", e.learning_rate},
                      {"optimizer_steps", e.optimizer_steps}});
  }
  return {{"scorer_id", result.scorer.id()},
          {"best_epoch", result.best_epoch},
          {"best_val_auroc", result.best_val_auroc},
          {"stopped_early", result.stopped_early},
          {"epochs", epochs}};
}

}  // namespace chunkfuse
