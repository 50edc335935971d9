#pragma once

#include <cstdint>
#include <random>

namespace gridcaps {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for stream `index` of purpose `stream` under a global seed. Every
/// per-sample random draw in the pipeline goes through this, so results do
/// not depend on iteration or thread order.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t index = 0) noexcept {
  return mix64(mix64(seed ^ mix64(stream)) + index);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

// Stream identifiers.
namespace streams {
inline constexpr std::uint64_t scenario = 1;
inline constexpr std::uint64_t split = 2;
inline constexpr std::uint64_t degrade = 3;
inline constexpr std::uint64_t init = 4;
inline constexpr std::uint64_t shuffle = 5;
inline constexpr std::uint64_t dropout = 6;
inline constexpr std::uint64_t eval = 7;
}  // namespace streams

}  // namespace gridcaps
