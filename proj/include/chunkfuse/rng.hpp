#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace chunkfuse {

// Derives an independent seed for a named substream ("split", "init",
// "shuffle", ...) of a single experiment seed.
std::uint64_t substream_seed(std::uint64_t seed, std::string_view name);

// Thin wrapper over mt19937_64 whose draws do not depend on the standard
// library's distribution implementations, so results are reproducible across
// toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::string_view stream) : engine_(substream_seed(seed, stream)) {}

  std::uint64_t next() { return engine_(); }

  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  // Uniform real in [0, 1) with 53 bits of resolution.
  double uniform();

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace chunkfuse
