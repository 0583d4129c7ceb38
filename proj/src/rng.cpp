#include "eyemark/rng.hpp"

namespace eyemark {

namespace {
// FNV-1a over bytes, then one splitmix64 finalization round.
uint64_t mix(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace

uint64_t substream_seed(uint64_t seed, const std::string& name) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return mix(h ^ mix(seed));
}

uint64_t substream_seed(uint64_t seed, uint64_t a, uint64_t b) {
  return mix(mix(seed ^ 0x6a09e667f3bcc909ull) ^ mix(a) ^ (mix(b) << 1));
}

}  // namespace eyemark
