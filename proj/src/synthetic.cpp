#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "chunkfuse/corpus.hpp"
#include "chunkfuse/error.hpp"
#include "chunkfuse/rng.hpp"

namespace chunkfuse {
namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";
constexpr std::size_t kSyllables = kConsonants.size() * kVowels.size();  // 70
constexpr std::size_t kWordSpace = kSyllables * kSyllables * kSyllables;
constexpr std::size_t kSpread = 7919;  // coprime with kWordSpace

// Three-syllable pseudo-word; distinct for distinct i < kWordSpace.
std::string pseudo_word(std::size_t i) {
  std::size_t code = (i * kSpread) % kWordSpace;
  std::string word;
  for (int s = 0; s < 3; ++s) {
    const std::size_t syl = code % kSyllables;
    code /= kSyllables;
    word.push_back(kConsonants[syl / kVowels.size()]);
    word.push_back(kVowels[syl % kVowels.size()]);
  }
  return word;
}

// Signal tokens carry letters outside the filler alphabet, so they can never
// collide with filler words.
std::string signal_word(int cls, std::size_t position) {
  return fmt::format("qx{}{}", pseudo_word(static_cast<std::size_t>(cls)), pseudo_word(position + 1));
}

constexpr std::array<double, 4> kLosRepresentativeDays = {2.0, 5.0, 10.0, 20.0};

std::size_t uniform_between(Rng& rng, std::size_t lo, std::size_t hi) {  // inclusive
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

std::size_t straddling_offset(Rng& rng, std::size_t doc_len, std::size_t sig_len,
                              std::size_t period) {
  // Boundaries b = k * period with some start s, s < b < s + sig_len, that fits.
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t b = period; b < doc_len; b += period) {
    const std::size_t lo = b + 1 > sig_len ? b + 1 - sig_len : 0;
    const std::size_t hi = std::min(b - 1, doc_len - sig_len);
    if (lo <= hi) ranges.emplace_back(lo, hi);
  }
  if (ranges.empty()) return uniform_between(rng, 0, doc_len - sig_len);
  const auto& [lo, hi] = ranges[static_cast<std::size_t>(rng.below(ranges.size()))];
  return uniform_between(rng, lo, hi);
}

std::size_t contained_offset(Rng& rng, std::size_t doc_len, std::size_t sig_len,
                             std::size_t period) {
  // Offsets whose span stays inside one period cell.
  std::vector<std::size_t> candidates;
  for (std::size_t s = 0; s + sig_len <= doc_len; ++s) {
    if (s / period == (s + sig_len - 1) / period) candidates.push_back(s);
  }
  if (candidates.empty()) return uniform_between(rng, 0, doc_len - sig_len);
  return candidates[static_cast<std::size_t>(rng.below(candidates.size()))];
}

SignalPlacement parse_placement(const std::string& name) {
  if (name == "uniform") return SignalPlacement::Uniform;
  if (name == "straddle") return SignalPlacement::Straddle;
  if (name == "late") return SignalPlacement::Late;
  throw ConfigError(fmt::format("unknown signal placement '{}'", name));
}

std::string_view placement_name(SignalPlacement p) {
  switch (p) {
    case SignalPlacement::Uniform: return "uniform";
    case SignalPlacement::Straddle: return "straddle";
    case SignalPlacement::Late: return "late";
  }
  return "uniform";
}

}  // namespace

SyntheticConfig SyntheticConfig::from_json(const nlohmann::json& j) {
  SyntheticConfig c;
  c.num_docs = j.value("num_docs", c.num_docs);
  c.min_tokens = j.value("min_tokens", c.min_tokens);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.class_balance = j.value("class_balance", c.class_balance);
  c.signal_length = j.value("signal_length", c.signal_length);
  c.filler_vocab_size = j.value("filler_vocab_size", c.filler_vocab_size);
  c.decoy_rate = j.value("decoy_rate", c.decoy_rate);
  if (j.contains("placement")) c.placement = parse_placement(j.at("placement").get<std::string>());
  c.straddle_probability = j.value("straddle_probability", c.straddle_probability);
  c.straddle_period = j.value("straddle_period", c.straddle_period);
  c.min_signal_offset = j.value("min_signal_offset", c.min_signal_offset);
  return c;
}

nlohmann::json SyntheticConfig::to_json() const {
  return {{"num_docs", num_docs},
          {"min_tokens", min_tokens},
          {"max_tokens", max_tokens},
          {"num_classes", num_classes},
          {"class_balance", class_balance},
          {"signal_length", signal_length},
          {"filler_vocab_size", filler_vocab_size},
          {"decoy_rate", decoy_rate},
          {"placement", placement_name(placement)},
          {"straddle_probability", straddle_probability},
          {"straddle_period", straddle_period},
          {"min_signal_offset", min_signal_offset}};
}

void SyntheticConfig::validate() const {
  if (num_docs == 0) throw ConfigError("synthetic corpus needs at least one document");
  if (num_classes != 2 && num_classes != 4) {
    throw ConfigError(fmt::format("synthetic num_classes must be 2 or 4, got {}", num_classes));
  }
  if (signal_length == 0) throw ConfigError("signal_length must be positive");
  if (min_tokens > max_tokens) throw ConfigError("min_tokens exceeds max_tokens");
  if (min_tokens < signal_length) {
    throw ConfigError(fmt::format("document length {} is below signal length {}", min_tokens,
                                  signal_length));
  }
  if (filler_vocab_size == 0 || filler_vocab_size > kWordSpace) {
    throw ConfigError("filler_vocab_size out of range");
  }
  if (!(class_balance >= 0.0 && class_balance <= 1.0)) throw ConfigError("class_balance not in [0,1]");
  if (!(decoy_rate >= 0.0 && decoy_rate < 1.0)) throw ConfigError("decoy_rate not in [0,1)");
  if (placement == SignalPlacement::Straddle) {
    if (straddle_period == 0) throw ConfigError("straddle_period must be positive");
    if (signal_length < 2) throw ConfigError("a straddling signal needs at least two tokens");
    if (!(straddle_probability >= 0.0 && straddle_probability <= 1.0)) {
      throw ConfigError("straddle_probability not in [0,1]");
    }
  }
  if (placement == SignalPlacement::Late && min_signal_offset + signal_length > min_tokens) {
    throw ConfigError("min_signal_offset leaves no room for the signal in the shortest document");
  }
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed, "synthetic");

  SyntheticCorpus corpus;
  corpus.patterns.resize(static_cast<std::size_t>(config.num_classes));
  std::vector<std::string> signal_vocab;
  for (int c = 1; c < config.num_classes; ++c) {
    for (std::size_t i = 0; i < config.signal_length; ++i) {
      corpus.patterns[static_cast<std::size_t>(c)].push_back(signal_word(c, i));
      signal_vocab.push_back(corpus.patterns[static_cast<std::size_t>(c)].back());
    }
  }
  std::vector<std::string> filler(config.filler_vocab_size);
  for (std::size_t i = 0; i < filler.size(); ++i) filler[i] = pseudo_word(i);

  // Exact class counts, then shuffled.
  std::vector<int> labels(config.num_docs, 0);
  if (config.num_classes == 2) {
    const auto n_pos = static_cast<std::size_t>(
        std::llround(static_cast<double>(config.num_docs) * config.class_balance));
    std::fill_n(labels.begin(), n_pos, 1);
  } else {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      labels[i] = static_cast<int>(i % static_cast<std::size_t>(config.num_classes));
    }
  }
  rng.shuffle(std::span<int>(labels));

  const auto draw_filler = [&]() -> const std::string& {
    if (!signal_vocab.empty() && config.decoy_rate > 0.0 && rng.bernoulli(config.decoy_rate)) {
      return signal_vocab[static_cast<std::size_t>(rng.below(signal_vocab.size()))];
    }
    return filler[static_cast<std::size_t>(rng.below(filler.size()))];
  };

  std::vector<const std::string*> tokens;
  for (std::size_t d = 0; d < config.num_docs; ++d) {
    const int label = labels[d];
    const std::size_t len = uniform_between(rng, config.min_tokens, config.max_tokens);
    tokens.assign(len, nullptr);
    for (auto& t : tokens) t = &draw_filler();

    PlantedSignal planted{label, config.signal_length, std::nullopt};
    if (label > 0) {
      const std::size_t sig = config.signal_length;
      std::size_t offset = 0;
      switch (config.placement) {
        case SignalPlacement::Uniform:
          offset = uniform_between(rng, 0, len - sig);
          break;
        case SignalPlacement::Late:
          offset = uniform_between(rng, config.min_signal_offset, len - sig);
          break;
        case SignalPlacement::Straddle:
          offset = rng.bernoulli(config.straddle_probability)
                       ? straddling_offset(rng, len, sig, config.straddle_period)
                       : contained_offset(rng, len, sig, config.straddle_period);
          break;
      }
      const auto& pattern = corpus.patterns[static_cast<std::size_t>(label)];
      for (std::size_t i = 0; i < sig; ++i) tokens[offset + i] = &pattern[i];
      planted.offset = offset;
    }

    // Decoys can, in principle, spell out a pattern; break any occurrence
    // other than the planted one.
    if (config.decoy_rate > 0.0) {
      for (int c = 1; c < config.num_classes; ++c) {
        const auto& pattern = corpus.patterns[static_cast<std::size_t>(c)];
        for (std::size_t s = 0; s + pattern.size() <= len; ++s) {
          if (planted.offset && c == label && s == *planted.offset) continue;
          bool match = true;
          for (std::size_t i = 0; i < pattern.size() && match; ++i) {
            match = *tokens[s + i] == pattern[i];
          }
          if (match) tokens[s] = &filler[static_cast<std::size_t>(rng.below(filler.size()))];
        }
      }
    }

    // Scatter the token stream over the eight sections at random cut points.
    std::array<std::size_t, kNumSections + 1> cuts{};
    cuts[kNumSections] = len;
    for (std::size_t i = 1; i < kNumSections; ++i) cuts[i] = uniform_between(rng, 0, len);
    std::sort(cuts.begin() + 1, cuts.end() - 1);
    SectionMap sections;
    for (std::size_t i = 0; i < kNumSections; ++i) {
      std::string& text = sections[i];
      for (std::size_t t = cuts[i]; t < cuts[i + 1]; ++t) {
        if (t > cuts[i]) text.push_back(' ');
        text.append(*tokens[t]);
      }
    }

    std::optional<int> mortality;
    std::optional<double> los;
    if (config.num_classes == 2) {
      mortality = label;
    } else {
      los = kLosRepresentativeDays[static_cast<std::size_t>(label)];
    }
    corpus.notes.emplace_back(fmt::format("syn-{:06d}", d), std::move(sections), mortality, los);
    corpus.signals.push_back(planted);
  }
  return corpus;
}

std::size_t count_pattern_occurrences(std::string_view text,
                                      const std::vector<std::string>& pattern) {
  if (pattern.empty()) return 0;
  std::vector<std::string_view> toks;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto b = text.find_first_not_of(' ', pos);
    if (b == std::string_view::npos) break;
    auto e = text.find(' ', b);
    if (e == std::string_view::npos) e = text.size();
    toks.push_back(text.substr(b, e - b));
    pos = e;
  }
  std::size_t count = 0;
  for (std::size_t s = 0; s + pattern.size() <= toks.size(); ++s) {
    bool match = true;
    for (std::size_t i = 0; i < pattern.size() && match; ++i) match = toks[s + i] == pattern[i];
    if (match) ++count;
  }
  return count;
}

}  // namespace chunkfuse
