#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace polydisp {

// SplitMix64 finalizer applied to (seed, counter). Used to derive child
// stream seeds so that replicate results do not depend on scheduling order.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t counter) {
  std::uint64_t z = seed + (counter + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Seeded random stream. Uniform, normal and binomial draws are generated
// with explicit algorithms on top of mt19937_64 rather than the standard
// <random> distributions, whose output is implementation-defined; runs must
// be reproducible from the scalar seed alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // U(0,1), 53-bit resolution, strictly inside the open interval.
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) *
           (1.0 / 9007199254740992.0);
  }

  // Box-Muller with a cached spare deviate.
  double normal(double mean = 0.0, double sd = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + sd * spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return mean + sd * radius * std::cos(angle);
  }

  // Exact Binomial(trials, p) by counting Bernoulli successes. O(trials),
  // which is fine at the group sizes this project works with.
  int binomial(int trials, double p) {
    if (trials < 0) throw std::invalid_argument("binomial: negative trials");
    if (p <= 0.0) return 0;
    if (p >= 1.0) return trials;
    int successes = 0;
    for (int k = 0; k < trials; ++k) {
      if (uniform() < p) ++successes;
    }
    return successes;
  }

  std::uint64_t next_raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace polydisp
