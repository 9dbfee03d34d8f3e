#ifndef HISTOCUBE_MODEL_SUPPORT_HPP
#define HISTOCUBE_MODEL_SUPPORT_HPP

#include <map>
#include <random>
#include <vector>

#include "histocube/model.hpp"
#include "histocube/occlusion.hpp"
#include "test_support.hpp"

namespace histocube::test {

/// Every label map on g with n labels, in lexicographic order.
inline std::vector<LabelMap> all_label_maps(const Grid& g, int n) {
  std::vector<LabelMap> out;
  std::vector<int> labels(g.size(), 0);
  while (true) {
    out.emplace_back(g, n, labels);
    std::size_t i = g.size();
    while (i > 0 && ++labels[i - 1] == n) labels[--i] = 0;
    if (i == 0) break;
  }
  return out;
}

/// Distinct translation orbits of all label maps, each as its sorted member list.
inline std::vector<std::vector<LabelMap>> all_orbits(const Grid& g, int n) {
  std::map<LabelMap, std::vector<LabelMap>> by_canon;
  for (const auto& m : all_label_maps(g, n)) by_canon[canonical_translate(m)].push_back(m);
  std::vector<std::vector<LabelMap>> out;
  for (auto& [c, members] : by_canon) out.push_back(std::move(members));
  return out;
}

/// Random translation-invariant class table over all orbits on g.
inline ModelPtr random_class_table(Rng& rng, const Grid& g, int n) {
  const auto orbits = all_orbits(g, n);
  const auto mass = random_simplex(rng, orbits.size());
  std::vector<WeightedMap> classes;
  for (std::size_t i = 0; i < orbits.size(); ++i) classes.push_back({orbits[i].front(), mass[i]});
  return make_class_table(g, n, std::move(classes));
}

/// Random flat binary table: a mixture of translation-invariant orbit masses
/// and complementary pairs {phi, 1 - phi} of equal mass.
inline ModelPtr random_flat_binary_table(Rng& rng, const Grid& g) {
  std::map<LabelMap, double> acc;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double alpha = u(rng);
  const auto orbits = all_orbits(g, 2);
  const auto orbit_mass = random_simplex(rng, orbits.size());
  for (std::size_t i = 0; i < orbits.size(); ++i) {
    for (const auto& m : orbits[i]) acc[m] += alpha * orbit_mass[i] / static_cast<double>(orbits[i].size());
  }
  const auto maps = all_label_maps(g, 2);
  const auto pair_mass = random_simplex(rng, maps.size() / 2);
  for (std::size_t i = 0; i < maps.size() / 2; ++i) {
    // maps[i] and maps[size - 1 - i] are complements in lexicographic order.
    acc[maps[i]] += (1.0 - alpha) * pair_mass[i] / 2.0;
    acc[maps[maps.size() - 1 - i]] += (1.0 - alpha) * pair_mass[i] / 2.0;
  }
  std::vector<WeightedMap> entries;
  double total = 0.0;
  for (const auto& [m, p] : acc) total += p;
  for (const auto& [m, p] : acc) entries.push_back({m, p / total});
  return make_table(g, 2, std::move(entries));
}

/// Pixel-dependent binary spinner with P(phi(x) = 1) drawn uniformly per pixel.
inline ModelPtr random_pixel_spinner(Rng& rng, const Grid& g, int n = 2) {
  std::vector<std::vector<double>> probs;
  for (std::size_t x = 0; x < g.size(); ++x) probs.push_back(random_simplex(rng, static_cast<std::size_t>(n)));
  return make_pixel_spinner(g, n, std::move(probs));
}

inline std::vector<Image> random_sources(Rng& rng, const Grid& g, const ValueSpace& y, int n) {
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) out.push_back(random_image(rng, g, y));
  return out;
}

}  // namespace histocube::test

#endif  // HISTOCUBE_MODEL_SUPPORT_HPP
