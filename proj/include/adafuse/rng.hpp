#pragma once

#include <cstdint>
#include <random>

namespace adafuse {

/// Seeded generator. Owned by exactly one consumer; never shared across threads.
using Rng = std::mt19937_64;

/// Independent substream seed for (seed, stream) via splitmix64 mixing.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  return Rng(derive_seed(seed, stream));
}

}  // namespace adafuse
