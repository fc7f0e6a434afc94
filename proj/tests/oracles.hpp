#pragma once

// Shared test helpers: seeded smooth fields and convergence-order arithmetic.

#include <cmath>
#include <numbers>
#include <random>

#include "yamabe/geometry.hpp"

namespace oracle {

using yamabe::GridManifold;
using yamabe::ScalarField;
using yamabe::SmallVec;

/// Smooth field periodic in the tangential axes: a short random sum of
/// products of a single-axis tangential Fourier mode (wavenumber at most 2 pi)
/// and a normal cosine, amplitude ~amp. Modes stay well resolved at 16 cells.
struct SmoothField {
  struct Mode {
    double a, phase, beta;
    int k0, k1, m;
  };
  std::vector<Mode> modes;
  double offset = 0.0;

  SmoothField(std::uint64_t seed, double amp = 0.15, int count = 3) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> axis(-1, 1), m(0, 1);
    for (int i = 0; i < count; ++i) {
      const int a = axis(rng);
      modes.push_back({amp * u(rng), std::numbers::pi * u(rng), std::numbers::pi * u(rng), a == 0, a == 1, m(rng)});
    }
    // always vary across the slab so normal derivatives are exercised
    modes.front().m = 1;
    offset = amp * u(rng);
  }

  double operator()(const SmallVec& x) const {
    const int n = static_cast<int>(x.size());
    const double y = x[n - 1];
    double v = offset;
    for (const auto& md : modes) {
      const double tang = 2.0 * std::numbers::pi * (md.k0 * x[0] + md.k1 * (n > 2 ? x[1] : 0.0)) + md.phase;
      v += md.a * std::sin(tang) * std::cos(std::numbers::pi * md.m * y + md.beta);
    }
    return v;
  }

  ScalarField sample(const GridManifold& grid) const {
    return yamabe::sample(grid, [this](const SmallVec& x) { return (*this)(x); });
  }
};

inline double order(double coarse_error, double fine_error) { return std::log2(coarse_error / fine_error); }

}  // namespace oracle
