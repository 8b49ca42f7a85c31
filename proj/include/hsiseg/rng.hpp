#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace hsiseg {

// Deterministic pseudo-random stream (splitmix64).  All randomness in the
// project goes through this class so that runs reproduce bit-for-bit across
// platforms; the standard <random> distributions are implementation-defined
// and must not be used.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller (uncached: two uniforms per draw keeps the
  // state trajectory independent of call parity).
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // Uniform integer in [0, n).  Modulo bias is negligible for the small n used
  // here (n << 2^64).
  uint64_t below(uint64_t n) { return next_u64() % n; }

  // Fisher-Yates shuffle; std::shuffle is implementation-defined so we roll
  // our own on top of the deterministic stream.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Combine two values into a fresh stream seed.  Used to derive per-purpose
  // substreams from a master seed without overlap in practice.
  static uint64_t mix(uint64_t a, uint64_t b) {
    uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  uint64_t state_;
};

}  // namespace hsiseg
