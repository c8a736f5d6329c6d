#pragma once

#include <cstdint>
#include <random>

namespace mvherit {

// Splittable seeded RNG. Every stochastic routine takes an explicit Rng&,
// so callers own the stream layout and runs are reproducible by seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Derives an independent stream from a master seed. Stream i depends only
  // on (master_seed, i), so adding streams never perturbs existing ones.
  static Rng stream(std::uint64_t master_seed, std::uint64_t stream_index) {
    std::uint64_t s = master_seed + (stream_index + 1) * 0x9E3779B97F4A7C15ULL;
    return Rng(mix(s));
  }

  double normal() { return normal_(engine_); }

  // uniform on [0, 1)
  double uniform() { return uniform_(engine_); }

  double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double chi_squared(double df) {
    std::gamma_distribution<double> g(df / 2.0, 2.0);
    return g(engine_);
  }

  // uniform integer on [lo, hi] inclusive
  long uniform_int(long lo, long hi) {
    std::uniform_int_distribution<long> d(lo, hi);
    return d(engine_);
  }

  long binomial(long trials, double prob) {
    std::binomial_distribution<long> d(trials, prob);
    return d(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  // SplitMix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace mvherit
