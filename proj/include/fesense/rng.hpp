#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fesense {

// Deterministic random source. The transforms are written out by hand
// because the std:: distribution objects are not pinned across library
// implementations; mt19937_64 itself is, so streams reproduce everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t raw() { return eng_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Exponential with the given mean; u = 0 maps to 0, never to inf.
  double exponential(double mean) { return -mean * std::log1p(-uniform()); }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace fesense
