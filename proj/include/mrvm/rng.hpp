// Copyright 2026 The mrvm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace mrvm {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent substream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for substream (a, b, c) of a run seeded with `seed`. Ray-level
/// randomness is drawn from substreams keyed by (iteration, ray index) so the
/// result never depends on how rays are distributed across workers.
constexpr std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t a,
                                       std::uint64_t b = 0,
                                       std::uint64_t c = 0) {
  return mix64(mix64(mix64(seed ^ 0x6d72766dULL) + a) + b) + mix64(c);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                    std::uint64_t c = 0) {
  return Rng(substream_seed(seed, a, b, c));
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Unbiased integer in [0, n).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  if (n == 0) return 0;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

std::string rng_state_to_string(const Rng& rng);
Rng rng_state_from_string(const std::string& state);

}  // namespace mrvm
