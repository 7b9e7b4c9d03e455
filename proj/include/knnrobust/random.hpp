#pragma once

#include <cstdint>
#include <random>

namespace knnrobust {

using Rng = std::mt19937_64;

/// Deterministically derives an independent child seed from a root seed and a
/// stream tag (splitmix64 finalizer over the mixed pair).
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace knnrobust
