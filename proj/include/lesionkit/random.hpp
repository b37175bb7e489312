#pragma once

#include <cstdint>
#include <random>

namespace lesionkit {

// Every random stream in the library. Seeds are always explicit.
using Rng = std::mt19937_64;

// Independent stream for task `index` under a base seed.
inline Rng stream(std::uint64_t base_seed, std::uint64_t index) { return Rng(base_seed + index); }

// Base seed for a named purpose under a run seed (splitmix64 finalizer), so
// that e.g. phantom and training streams never share a base.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (purpose + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace lesionkit
