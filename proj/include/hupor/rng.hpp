#pragma once

// seeded sampling helpers with fully specified arithmetic, so identical seeds
// give identical streams regardless of the standard library's distribution
// implementations.

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "hupor/geom.hpp"

namespace hupor {

struct Rng {
  std::mt19937_64 gen;

  explicit Rng(std::uint64_t seed) : gen(seed) {}

  // canonical double in [0, 1) built from the top 53 bits.
  double canonical() { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * canonical(); }

  // inclusive range; modulo bias is irrelevant at these range sizes.
  int uniform_int(int a, int b) {
    return a + static_cast<int>(gen() % static_cast<std::uint64_t>(b - a + 1));
  }

  double normal(double mean = 0.0, double sd = 1.0) {
    const double u1 = 1.0 - canonical();  // (0, 1]
    const double u2 = canonical();
    return mean + sd * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  V3d unit_vector() {
    const double z = uniform(-1.0, 1.0);
    const double phi = uniform(0.0, 2.0 * M_PI);
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {s * std::cos(phi), s * std::sin(phi), z};
  }
};

inline void shuffle_indices(std::vector<int>& idx, Rng& rng) {
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
    std::swap(idx[i], idx[static_cast<size_t>(rng.uniform_int(0, i))]);
}

}  // namespace hupor
