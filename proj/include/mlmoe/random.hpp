#pragma once

// Deterministic random streams.
//
// Every stream is a std::mt19937_64 engine (bit-exact across standard
// libraries) seeded through SplitMix64. Uniform and Gaussian variates are
// produced here rather than through <random> distributions, whose outputs are
// implementation-defined.

#include <cstdint>
#include <random>

namespace mlmoe {

// SplitMix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x);

// Order-sensitive hash of a seed and a salt; used to derive independent
// sub-stream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next() { return engine_(); }

  // 53-bit uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Standard normal by the Box-Muller transform.
  double normal();

  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mlmoe
