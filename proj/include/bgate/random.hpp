#pragma once

#include <cstdint>
#include <random>

namespace bgate {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a parent seed and a tag (splitmix64 mixing).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag1, std::uint64_t tag2) {
  return derive_seed(derive_seed(seed, tag1), tag2);
}

}  // namespace bgate
