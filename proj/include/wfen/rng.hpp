#pragma once

#include <cstdint>
#include <random>

namespace wfen {

// mt19937_64 with a hand-rolled uniform mapping. The engine output is pinned
// by the standard; std::uniform_real_distribution is not, so we avoid it.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Uniform integer in [0, n).
  uint64_t below(uint64_t n) { return static_cast<uint64_t>(next_unit() * static_cast<double>(n)); }

 private:
  std::mt19937_64 eng_;
};

// Small counter-style generator for procedural content keyed by (seed, index).
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}
  SplitMix64(uint64_t seed, uint64_t index) : state_(seed + 0x9e3779b97f4a7c15ull * (index + 1)) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

 private:
  uint64_t state_;
};

// FNV-1a, used for order-sensitive run fingerprints.
inline uint64_t fnv1a_init() { return 0xcbf29ce484222325ull; }

inline uint64_t fnv1a_add(uint64_t h, uint64_t value) {
  for (int i = 0; i < 8; ++i) {
    h ^= (value >> (8 * i)) & 0xffull;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace wfen
