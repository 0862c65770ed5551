#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace blockjm {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

/// Stable 64-bit hash of a name (FNV-1a), used to key seeds by block identity.
std::uint64_t hash_name(std::string_view name);

/// Seed for an independent stream keyed by (master, a, b).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

inline Rng make_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  return Rng(seq);
}

/// Uniform on (0, 1), never exactly 0.
inline double uniform01(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

double standard_normal(Rng& rng);
double standard_exponential(Rng& rng);

}  // namespace blockjm
