#pragma once

#include <cstdint>
#include <random>

namespace ctxmhe {

/// splitmix64 finalizer; decorrelates nearby seed values.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent seed stream from (seed, tag) pairs.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed ^ splitmix64(tag));
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(seed, a), b);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                              std::uint64_t c) {
  return mix_seed(mix_seed(seed, a, b), c);
}

// Stream tags; keep values stable, they feed reproducible seeds.
namespace seed_tag {
constexpr std::uint64_t kMeasure = 0x11;
constexpr std::uint64_t kWind = 0x22;
constexpr std::uint64_t kNetInit = 0x33;
constexpr std::uint64_t kEpisode = 0x44;
constexpr std::uint64_t kEval = 0x55;
constexpr std::uint64_t kTrain = 0x66;
}  // namespace seed_tag

using Rng = std::mt19937_64;

}  // namespace ctxmhe
