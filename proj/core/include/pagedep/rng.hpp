#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace pagedep {

/// Deterministic random source. All sampling helpers are implemented on top
/// of the raw mt19937_64 bit stream (no std::*_distribution), so a given seed
/// produces the same draws on every platform and compiler.
class Rng {
public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi);

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one draw per call, spare cached).
  double normal();
  double normal(double mean, double std) { return mean + std * normal(); }

  /// Index sampled proportionally to `weights` (nonnegative, sum > 0).
  size_t discrete(const std::vector<double>& weights);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(0, static_cast<int>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Mixes a base seed with stream coordinates into an independent child seed
/// (splitmix64 finalizer). Used to derive per-document / per-epoch streams.
uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0);

}  // namespace pagedep
