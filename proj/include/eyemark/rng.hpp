#pragma once

#include <cstdint>
#include <string>

namespace eyemark {

// splitmix64 stream. Small, portable, and bit-reproducible across
// platforms, which std::uniform_real_distribution is not.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1) from the top 53 bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

 private:
  uint64_t state_;
};

// Substream derivation: hashing (seed, name) decouples every consumer,
// so adding a parameter or sample never shifts another stream.
uint64_t substream_seed(uint64_t seed, const std::string& name);
uint64_t substream_seed(uint64_t seed, uint64_t a, uint64_t b = 0);

}  // namespace eyemark
