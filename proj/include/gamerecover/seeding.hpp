#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace gamerecover {

using Engine = std::mt19937_64;

/// SplitMix64 finaliser; bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives a child seed from a parent seed and a sequence of integer tags.
/// Used for per-task and per-stage streams so that any subset of work can be
/// replayed independently.
constexpr std::uint64_t derive_seed(std::uint64_t parent,
                                    std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t h = mix64(parent);
  for (std::uint64_t t : tags) h = mix64(h ^ mix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

// Stage tags for streams derived from one task seed.
namespace stream {
inline constexpr std::uint64_t generate = 1;
inline constexpr std::uint64_t equilibria = 2;
inline constexpr std::uint64_t noise = 3;
inline constexpr std::uint64_t containment = 4;
inline constexpr std::uint64_t resample = 5;
}  // namespace stream

inline Engine make_engine(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return Engine(seq);
}

}  // namespace gamerecover
