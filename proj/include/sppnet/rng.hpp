#pragma once

#include <cstdint>
#include <random>

namespace sppnet {

/// Engine used for every seeded draw. mt19937_64 output is fixed by the
/// standard; the helpers below avoid the implementation-defined
/// distributions so streams match across standard libraries.
using Engine = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Engine& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

/// Uniform double in [lo, hi).
inline double uniform(Engine& engine, double lo, double hi) {
  return lo + (hi - lo) * uniform01(engine);
}

/// Unbiased integer in [0, bound) by rejection.
inline std::uint64_t bounded(Engine& engine, std::uint64_t bound) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x = engine();
  while (x >= limit) x = engine();
  return x % bound;
}

}  // namespace sppnet
