#pragma once

#include <cstdint>
#include <random>

namespace narl {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; a good bijective mixer for deriving seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream `index` of `seed` (counter-based split).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return mix_seed(mix_seed(seed) ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

// Fixed offsets from which every module draws its sub-seed.
enum class SeedStream : std::uint64_t {
  kData = 1,
  kTestData = 2,
  kMetaSplit = 3,
  kNoise = 4,
  kClassifierInit = 5,
  kAdjusterInit = 6,
  kBatches = 7,
  kKMeans = 8,
};

constexpr std::uint64_t sub_seed(std::uint64_t seed, SeedStream stream) {
  return derive_seed(seed, static_cast<std::uint64_t>(stream));
}

}  // namespace narl
