#pragma once

// Seed splitting. Every random stream in the library is an mt19937_64 seeded
// from a root seed through a chain of derive_seed() calls, e.g.
//
//   replicate stream  = derive_seed(root, replicate)
//   agent increments  = derive_seed(replicate stream, agent)
//   initial positions = derive_seed(replicate stream, kInitTag)
//
// so results never depend on how work is scheduled across threads.

#include <cstdint>
#include <random>

namespace cbo {

/// SplitMix64 finaliser.
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Child seed number `index` of `parent`.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept {
  return splitmix64(parent ^ splitmix64(index ^ 0xD1B54A32D192ED03ULL));
}

/// Tag for the initial-position stream of a replicate; agent streams use
/// indices 0..N-1, which never reach this value.
inline constexpr std::uint64_t kInitTag = 0xFFFF'FFFF'FFFF'FFF1ULL;

using Engine = std::mt19937_64;

}  // namespace cbo
