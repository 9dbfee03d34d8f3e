#ifndef HISTOCUBE_TEST_SUPPORT_HPP
#define HISTOCUBE_TEST_SUPPORT_HPP

#include <cstdint>
#include <random>
#include <vector>

#include "histocube/grid.hpp"

namespace histocube::test {

using Rng = std::mt19937_64;

inline Image random_image(Rng& rng, Grid g, ValueSpace y) {
  std::uniform_int_distribution<std::uint32_t> d(0, static_cast<std::uint32_t>(y.size() - 1));
  std::vector<std::uint32_t> px(g.size());
  for (auto& v : px) v = d(rng);
  return Image{g, std::move(y), std::move(px)};
}

inline LabelMap random_labels(Rng& rng, Grid g, int n) {
  std::uniform_int_distribution<int> d(0, n - 1);
  std::vector<int> l(g.size());
  for (auto& v : l) v = d(rng);
  return LabelMap{g, n, std::move(l)};
}

inline std::vector<double> random_simplex(Rng& rng, std::size_t n) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(n);
  double s = 0.0;
  for (auto& v : p) s += (v = e(rng));
  for (auto& v : p) v /= s;
  return p;
}

/// Random nonnegative weights on the (2r+1)^2 square around the origin.
inline WeightingFunction random_window(Rng& rng, Grid g, int r, double sparsity = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> dense(g.size(), 0.0);
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (u(rng) < sparsity && (dx != 0 || dy != 0)) continue;
      dense[g.index({dx, dy})] += u(rng) + 0.01;
    }
  }
  double s = 0.0;
  for (const double v : dense) s += v;
  for (auto& v : dense) v /= s;
  const bool fits = 2 * r + 1 <= g.width() && 2 * r + 1 <= g.height();
  return WeightingFunction{g, std::move(dense), fits ? std::optional<int>{r} : std::nullopt};
}

/// Literal O(|X|^2 |Y|) evaluation of sum_x' w(x') [f(x + x') = y] over every x' in X.
inline HistCube direct_oracle(const Image& f, const WeightingFunction& w) {
  const Grid& g = f.grid();
  HistCube out{g, f.values()};
  for (std::size_t x = 0; x < g.size(); ++x) {
    for (std::uint32_t y = 0; y < f.values().size(); ++y) {
      double s = 0.0;
      for (std::size_t xp = 0; xp < g.size(); ++xp) {
        if (f[g.index(g.add(g.point(x), g.point(xp)))] == y) s += w[xp];
      }
      out.at(x, y) = s;
    }
  }
  return out;
}

/// Hand-made 6x8 image over Z_5 used as the small worked example.
inline Image fig2_image() {
  const std::vector<std::uint32_t> px = {
      0, 0, 1, 1, 2, 2,  //
      0, 0, 0, 1, 2, 2,  //
      3, 0, 1, 1, 1, 2,  //
      3, 3, 1, 1, 1, 4,  //
      3, 3, 1, 1, 1, 4,  //
      3, 3, 3, 1, 4, 4,  //
      2, 3, 3, 4, 4, 4,  //
      2, 2, 3, 4, 4, 0,
  };
  return Image{Grid{6, 8}, ValueSpace::cyclic(5), px};
}

}  // namespace histocube::test

#endif  // HISTOCUBE_TEST_SUPPORT_HPP
