#pragma once

#include <cstdint>
#include <random>

namespace bonekin {

// splitmix64, used to derive independent sub-stream seeds from a master seed.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0,
                            uint64_t c = 0) {
  uint64_t s = splitmix64(seed ^ splitmix64(a));
  s = splitmix64(s ^ splitmix64(b + 0x632be59bd9b4e019ULL));
  return splitmix64(s ^ splitmix64(c + 0x9e6c63d0876a9a47ULL));
}

using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  return Rng(derive_seed(seed, a, b, c));
}

inline double uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {  // inclusive bounds
  std::uniform_int_distribution<int> d(lo, hi);
  return d(rng);
}

inline double gaussian(Rng& rng, double mean, double sigma) {
  std::normal_distribution<double> d(mean, sigma);
  return d(rng);
}

}  // namespace bonekin
