#pragma once

#include <cstdint>

#include "grip/types.hpp"

namespace grip {

// SplitMix64: a counter-based generator. The counter advances by the odd
// constant 0x9E3779B97F4A7C15 per draw and the output is a fixed bijective
// mix of the counter, so streams are identical on every platform.
//
// uniform(): top 53 bits scaled to [0,1).
// normal():  Box-Muller on two uniforms (u1 mapped into (0,1]); both
//            outputs of a pair are used.
// below(n):  rejection sampling on the top bits, unbiased.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), counter_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  double uniform();
  double normal();
  Index below(Index n);

  // Independent stream: seeded from this stream's next output mixed with
  // `stream`. Advances this generator by one draw.
  Rng split(std::uint64_t stream = 0);

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Rng rng_new(std::uint64_t seed);
Mat rng_normal(Rng& rng, Index rows, Index cols, double sigma);
Mat rng_uniform(Rng& rng, Index rows, Index cols);
// k distinct indices from [0, n) in draw order (partial Fisher-Yates).
IndexList rng_choice(Rng& rng, Index k, Index n);

// Deterministic sub-seed for a named purpose, e.g. split offsets.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t offset);

}  // namespace grip
