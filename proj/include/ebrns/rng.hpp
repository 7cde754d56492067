#pragma once

// Deterministic 64-bit RNG used for every draw that can land in an artifact.
// SplitMix64 core (Steele, Lea & Flood 2014, "Fast splittable pseudorandom
// number generators") with 53-bit uniforms and Box-Muller normals. The
// standard-library distributions are deliberately avoided: their output
// sequences are implementation-defined, which would break bit-for-bit
// reproducibility of datasets and training runs across toolchains.

#include <cmath>
#include <cstdint>

namespace ebrns {

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform on (0, 1]: 53-bit mantissa, never exactly zero (log-safe).
  double uniform01() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // Standard normal via Box-Muller. Draws two uniforms per call and discards
  // the second variate: one call = two generator steps, stateless otherwise,
  // so the draw sequence is a pure function of the call sequence.
  double normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates shuffle over [0, n) index vectors and friends.
  template <class Vec>
  void shuffle(Vec& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(next_u64() % i);
      auto tmp = v[i - 1];
      v[i - 1] = v[j];
      v[j] = tmp;
    }
  }

 private:
  uint64_t state_;
};

// Stream derivation for per-sample / per-run draws: seed XOR id, then the
// SplitMix64 output function decorrelates adjacent streams.
inline uint64_t derive_seed(uint64_t seed, uint64_t id) { return seed ^ id; }

}  // namespace ebrns
