#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "difflab/errors.hpp"

namespace difflab {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

// Deterministic random source. All sampling goes through explicit Rng
// instances so every run is reproducible from its seed; the normal draw is
// a fixed Box-Muller so the stream does not depend on library internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(detail::splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  // Independent stream for e.g. sampler chain `index`; chains keep their
  // streams no matter how they are scheduled.
  Rng split(std::uint64_t index) const {
    return Rng(detail::splitmix64(seed_ ^ detail::splitmix64(index + 1)));
  }

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform over {0, ..., n-1}, rejection-sampled to avoid modulo bias.
  std::uint64_t uniform_index(std::uint64_t n) {
    require(n > 0, "uniform_index: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  std::vector<double> normal_vec(std::size_t n) {
    std::vector<double> out(n);
    for (auto& v : out) v = normal();
    return out;
  }

  // Draw from a finite distribution given nonnegative weights (need not be
  // normalized). Left-to-right inverse CDF keeps the draw deterministic.
  std::size_t categorical(const std::vector<double>& weights) {
    require(!weights.empty(), "categorical: no weights");
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    return weights.size() - 1;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace difflab
