#include "grip/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "grip/error.hpp"

namespace grip {

namespace {

std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() {
  counter_ += 0x9E3779B97F4A7C15ULL;
  return mix(counter_);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Index Rng::below(Index n) {
  if (n <= 0) throw InvalidArgument("Rng::below: n must be positive");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return static_cast<Index>(v % bound);
}

Rng Rng::split(std::uint64_t stream) { return Rng(mix(next_u64() ^ mix(stream + 0x632BE59BD9B4E019ULL))); }

Rng rng_new(std::uint64_t seed) { return Rng(seed); }

Mat rng_normal(Rng& rng, Index rows, Index cols, double sigma) {
  if (!(sigma >= 0.0)) throw InvalidArgument("rng_normal: sigma must be >= 0");
  Mat m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = sigma * rng.normal();
  return m;
}

Mat rng_uniform(Rng& rng, Index rows, Index cols) {
  Mat m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
  return m;
}

IndexList rng_choice(Rng& rng, Index k, Index n) {
  if (k < 0 || k > n) throw InvalidArgument("rng_choice: k must lie in [0, n]");
  IndexList pool(n);
  std::iota(pool.begin(), pool.end(), Index{0});
  for (Index i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.below(n - i)]);
  pool.resize(k);
  return pool;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t offset) {
  return mix(seed * 0x9E3779B97F4A7C15ULL + mix(offset + 1));
}

}  // namespace grip
