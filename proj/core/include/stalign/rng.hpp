#pragma once

#include <cstdint>

namespace stalign {

/// Seeded xoshiro256++ stream with hand-rolled distributions so that output
/// is identical across platforms and standard-library versions. Scenario
/// generation, training, and robust estimation all draw from these streams.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01();

  double uniform(double lo, double hi);

  /// Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi);

  /// Zero-mean Gaussian via Box-Muller (one spare cached).
  double normal(double sigma);

  int poisson(double lambda);

  /// Independent child stream; same parent seed + same tag -> same child.
  Rng fork(uint64_t tag) const;

 private:
  uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// 2D Gaussian jitter with the norm truncated at `cap` (resampled, not
/// clipped), so per-detection noise is bounded while keeping a Gaussian core.
void normal_in_disc(Rng& rng, double sigma, double cap, double& out_x, double& out_y);

}  // namespace stalign
