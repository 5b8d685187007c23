#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace mccws {

// Seedable generator with platform-independent output: the engine is
// std::mt19937_64 (fully specified by the standard) and every derived
// distribution below is implemented here rather than taken from <random>,
// whose distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform();

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  // Box-Muller; the second variate of each pair is cached.
  double normal();

  // Normal(0, stddev) resampled until it falls within two stddevs.
  double truncated_normal(double stddev);

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

// Mixes a base seed with a stream index (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace mccws
