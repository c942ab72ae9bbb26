#pragma once

#include <cstdint>
#include <random>

namespace metaassist {

using Rng = std::mt19937_64;

/// Named random streams. Every consumer of randomness derives its generator
/// from (seed, stream, index) so results do not depend on call order.
enum class Stream : std::uint64_t {
  LabelModel = 1,
  Context = 2,
  VanillaNoise = 3,
  PseudoNoise = 4,
  ModelInit = 5,
  SchemeInit = 6,
  TrainBatches = 7,
  MetaBatches = 8,
  AuxInit = 9,
  AuxBatches = 10,
  Instances = 11,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) noexcept {
  return splitmix64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(stream)) ^ index);
}

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

}  // namespace metaassist
