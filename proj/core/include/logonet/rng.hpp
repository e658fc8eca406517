#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace logonet {

// All randomness in the library flows through this type. The engine is
// std::mt19937_64 (fully specified by the standard); the distributions are
// written out here so that a seed reproduces the same stream everywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, bound). Rejection sampling, no modulo bias.
  uint64_t below(uint64_t bound);

  // Box-Muller; caches the second variate.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (size_t i = items.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Derives an independent child seed; used to give each subsystem its own
  // stream from the single run seed.
  static uint64_t derive(uint64_t seed, uint64_t stream);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace logonet
