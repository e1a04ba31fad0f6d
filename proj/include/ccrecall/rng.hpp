#pragma once

// Portable seeded randomness. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; the std distributions are not, so the
// variates below are derived from raw engine output directly.
//
// Streams: replicate k of a run seeded with s uses derive_seed(s, k), a
// SplitMix64 mix of both values. Streams never depend on scheduling.

#include <cstddef>
#include <cstdint>
#include <random>

namespace ccrecall {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  int bernoulli(double p) { return uniform() < p ? 1 : 0; }
  // Uniform on {0, ..., n-1}, n > 0; rejection sampling keeps it unbiased.
  std::size_t index(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

}  // namespace ccrecall
