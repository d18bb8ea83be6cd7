#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace graphsym::detail {

// Draws built directly on mt19937_64 output so sequences do not depend on the
// standard library's distribution implementations.

/// Uniform in [0, 1) with 53 random bits.
inline double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n) by rejection sampling.
inline std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t n) {
  std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

template <class T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[draw_below(rng, i)]);
}

}  // namespace graphsym::detail
