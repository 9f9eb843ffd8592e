#include "chunkfuse/scoring.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "chunkfuse/error.hpp"

namespace chunkfuse {

bool is_simplex(std::span<const double> probs, double tol) {
  if (probs.empty()) return false;
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < -tol || p > 1.0 + tol) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= tol;
}

ProbabilityVector ProbabilityVector::checked(std::vector<double> probs) {
  if (!is_simplex(probs)) {
    throw ContractError(fmt::format("not a probability vector: [{}]", fmt::join(probs, ", ")));
  }
  return ProbabilityVector{std::move(probs)};
}

ProbabilityVector ProbabilityVector::uniform(int num_classes) {
  if (num_classes < 1) throw ContractError("num_classes must be positive");
  return ProbabilityVector{
      std::vector<double>(static_cast<std::size_t>(num_classes), 1.0 / num_classes)};
}

std::string_view scorer_kind_name(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::Linear: return "linear";
    case ScorerKind::Remote: return "remote";
    case ScorerKind::Mock: return "mock";
  }
  return "linear";
}

ScorerKind parse_scorer_kind(std::string_view name) {
  if (name == "linear") return ScorerKind::Linear;
  if (name == "remote") return ScorerKind::Remote;
  if (name == "mock") return ScorerKind::Mock;
  throw ConfigError(fmt::format("unknown scorer kind '{}'", name));
}

ScorerDescriptor ScorerDescriptor::from_json(const nlohmann::json& j, int num_classes) {
  ScorerDescriptor d;
  if (!j.contains("id")) throw ConfigError("scorer entry needs an 'id'");
  d.scorer_id = j.at("id").get<std::string>();
  d.kind = parse_scorer_kind(j.value("kind", std::string("linear")));
  d.num_classes = j.value("num_classes", num_classes);
  if (j.contains("metadata")) {
    for (const auto& [k, v] : j.at("metadata").items()) {
      d.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  // Convenience spellings at the top level.
  for (const char* key : {"endpoint", "checkpoint", "seed", "table", "default"}) {
    if (j.contains(key)) {
      const auto& v = j.at(key);
      d.metadata[key] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  return d;
}

nlohmann::json ScorerDescriptor::to_json() const {
  return {{"id", scorer_id},
          {"kind", scorer_kind_name(kind)},
          {"num_classes", num_classes},
          {"metadata", metadata}};
}

std::vector<ProbabilityVector> ChunkScorer::score_batch(std::span<const Chunk> chunks) const {
  std::vector<ProbabilityVector> out;
  out.reserve(chunks.size());
  for (const auto& c : chunks) out.push_back(score(c));
  return out;
}

MockScorer::MockScorer(std::string id, int num_classes)
    : MockScorer(std::move(id), {}, ProbabilityVector::uniform(num_classes)) {}

MockScorer::MockScorer(std::string id, std::map<std::size_t, ProbabilityVector> table,
                       ProbabilityVector fallback)
    : table_(std::move(table)), fallback_(std::move(fallback)) {
  descriptor_.scorer_id = std::move(id);
  descriptor_.kind = ScorerKind::Mock;
  descriptor_.num_classes = fallback_.num_classes();
  if (!is_simplex(fallback_.probs)) throw ContractError("mock default vector is not a simplex");
  for (const auto& [index, vec] : table_) {
    if (vec.num_classes() != descriptor_.num_classes) {
      throw ContractError(fmt::format("mock table entry {} has {} classes, expected {}", index,
                                      vec.num_classes(), descriptor_.num_classes));
    }
    if (!is_simplex(vec.probs)) {
      throw ContractError(fmt::format("mock table entry {} is not a simplex", index));
    }
  }
}

MockScorer MockScorer::from_descriptor(const ScorerDescriptor& d) {
  std::map<std::size_t, ProbabilityVector> table;
  ProbabilityVector fallback = ProbabilityVector::uniform(d.num_classes);
  try {
    if (const auto it = d.metadata.find("table"); it != d.metadata.end()) {
      const auto parsed = nlohmann::json::parse(it->second);
      for (const auto& [k, v] : parsed.items()) {
        table.emplace(std::stoul(k), ProbabilityVector{v.get<std::vector<double>>()});
      }
    }
    if (const auto it = d.metadata.find("default"); it != d.metadata.end()) {
      fallback = ProbabilityVector{nlohmann::json::parse(it->second).get<std::vector<double>>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("mock scorer {}: {}", d.scorer_id, e.what()));
  } catch (const std::logic_error& e) {
    throw ConfigError(fmt::format("mock scorer {}: bad table key: {}", d.scorer_id, e.what()));
  }
  MockScorer scorer(d.scorer_id, std::move(table), std::move(fallback));
  if (scorer.num_classes() != d.num_classes) {
    throw ContractError(fmt::format("mock scorer {} has {} classes, task needs {}", d.scorer_id,
                                    scorer.num_classes(), d.num_classes));
  }
  scorer.descriptor_.metadata = d.metadata;
  return scorer;
}

ProbabilityVector MockScorer::score(const Chunk& chunk) const {
  const auto it = table_.find(chunk.index);
  return it == table_.end() ? fallback_ : it->second;
}

}  // namespace chunkfuse
