#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tae {

using Rng = std::mt19937_64;

/// Derives an independent seed for a named subsystem from a master seed, so
/// that changing how many draws one subsystem makes never perturbs another.
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag);

inline Rng make_rng(std::uint64_t master, std::string_view tag) {
  return Rng(derive_seed(master, tag));
}

/// Uniform integer in [lo, hi].
inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace tae
