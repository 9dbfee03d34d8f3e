#ifndef HISTOCUBE_TEXTURE_MODELS_HPP
#define HISTOCUBE_TEXTURE_MODELS_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "histocube/combinators.hpp"
#include "histocube/model.hpp"
#include "histocube/occlusion.hpp"
#include "histocube/rng.hpp"

/**
 * \file
 * \brief Expansion and overlay distributions, their structural checks, and
 * texture synthesis.
 */

namespace histocube {

/// Exact table of an expansion model.
[[nodiscard]] inline ModelPtr expansion_pdf(const OcclusionModel& model, std::size_t cap = kEnumerationCap) {
  if (!model.holds<ExpansionModel>()) throw std::invalid_argument("expansion_pdf needs an expansion model");
  return to_table(model, cap);
}

/// Exact table of an overlay model.
[[nodiscard]] inline ModelPtr overlay_pdf(const OcclusionModel& model, std::size_t cap = kEnumerationCap) {
  if (!model.holds<OverlayModel>()) throw std::invalid_argument("overlay_pdf needs an overlay model");
  return to_table(model, cap);
}

/// Total probability of an explicit support.
[[nodiscard]] inline double total_mass(std::span<const WeightedMap> support) {
  double s = 0.0;
  for (const auto& e : support) s += e.probability;
  return s;
}

/// Largest |P(T^s sigma) - P(sigma)| over the support and all shifts s.
[[nodiscard]] inline double translation_invariance_defect(std::span<const WeightedMap> support) {
  if (support.empty()) return 0.0;
  std::map<LabelMap, double> p;
  for (const auto& e : support) p[e.map] = e.probability;
  const Grid& g = support.front().map.grid();
  double worst = 0.0;
  for (const auto& e : support) {
    for (std::size_t s = 1; s < g.size(); ++s) {
      const auto it = p.find(translate_labels(e.map, g.point(s)));
      const double q = it == p.end() ? 0.0 : it->second;
      worst = std::max(worst, std::abs(q - e.probability));
    }
  }
  return worst;
}

/// Whether P(T^s phi) = P(phi) for every phi and shift, within `tol`.
[[nodiscard]] inline bool is_translation_invariant(const OcclusionModel& model, double tol = 0.0,
                                                   std::size_t cap = kEnumerationCap) {
  return translation_invariance_defect(enumerate_support(model, cap)) <= tol;
}

/// Outcome of an effective-disjointness check.
struct DisjointnessReport {
  bool disjoint = true;
  bool exhaustive = true;
  std::size_t checked = 0;  ///< center pairs (exhaustive) or sampled configurations
  std::optional<BlobOverlap> violation;
};

namespace detail {

// Differences b1 - b2 over all blob pairs: centers c1 != c2 can overlap iff
// c2 - c1 lands here.
inline std::vector<unsigned char> blob_difference_set(const Grid& g,
                                                      std::span<const BlobDistribution::Blob> blobs) {
  std::vector<unsigned char> diff(g.size(), 0);
  for (const auto& b1 : blobs) {
    for (const auto& b2 : blobs) {
      for (const Point p : b1.offsets) {
        for (const Point q : b2.offsets) diff[g.index(g.sub(p, q))] = 1;
      }
    }
  }
  return diff;
}

inline BlobOverlap overlap_witness(const Grid& g, std::span<const BlobDistribution::Blob> blobs, std::size_t c1,
                                   std::size_t c2) {
  for (const auto& b1 : blobs) {
    for (const auto& b2 : blobs) {
      for (const Point p : b1.offsets) {
        for (const Point q : b2.offsets) {
          const std::size_t a = g.add_index(c1, p);
          if (a == g.add_index(c2, q)) return {c1, c2, g.point(a)};
        }
      }
    }
  }
  return {c1, c2, {}};
}

}  // namespace detail

/// Checks that translated blobs never overlap in any positive-probability expansion.
/**
 * The exhaustive check is pairwise: blobs are drawn independently, so a
 * configuration with overlapping blobs has positive probability exactly when
 * two co-occurring centers c1, c2 have c2 - c1 in {b1 - b2}. Co-occurrence is
 * read from the seed's support, or from its marginals for independent-pixel
 * seeds. With `trials` set, sampled configurations are scanned instead.
 */
[[nodiscard]] inline DisjointnessReport check_effective_disjointness(const OcclusionModel& model,
                                                                     std::optional<std::size_t> trials = {},
                                                                     std::uint64_t seed = 0,
                                                                     std::size_t cap = kEnumerationCap) {
  if (!model.holds<ExpansionModel>()) throw std::invalid_argument("disjointness is defined for expansion models");
  const auto& e = model.as<ExpansionModel>();
  const Grid& g = model.grid();
  DisjointnessReport r;
  if (trials) {
    r.exhaustive = false;
    const auto blobs = e.blobs.support(g);
    std::vector<double> p;
    for (const auto& b : blobs) p.push_back(b.probability);
    for (std::size_t t = 0; t < *trials; ++t) {
      // Same streams as sample_label_map, so a reported overlap is reproducible.
      const std::uint64_t s = derive_seed(seed, t);
      const LabelMap phi = sample_label_map(*e.seed, derive_seed(s, 0));
      std::vector<std::vector<Point>> chosen(g.size());
      for (std::size_t c = 0; c < g.size(); ++c) {
        if (phi[c] != 1) continue;
        CounterRng rng{derive_seed(derive_seed(s, 1), c)};
        chosen[c] = blobs[rng.categorical(p)].offsets;
      }
      ++r.checked;
      if (auto v = find_blob_overlap(phi, chosen)) {
        r.disjoint = false;
        r.violation = v;
        return r;
      }
    }
    return r;
  }
  const auto blobs = e.blobs.support(g);
  const auto diff = detail::blob_difference_set(g, blobs);
  auto check_pair = [&](std::size_t c1, std::size_t c2) {
    ++r.checked;
    if (diff[g.index(g.sub(g.point(c2), g.point(c1)))]) {
      r.disjoint = false;
      r.violation = detail::overlap_witness(g, blobs, c1, c2);
      return false;
    }
    return true;
  };
  if (e.seed->holds<IidSpinner>() || e.seed->holds<PixelSpinner>()) {
    const MarginalField m = marginal_field(*e.seed);
    std::vector<std::size_t> live;
    for (std::size_t c = 0; c < g.size(); ++c) {
      if (m.at(c, 1) > 0.0) live.push_back(c);
    }
    for (std::size_t i = 0; i < live.size(); ++i) {
      for (std::size_t j = i + 1; j < live.size(); ++j) {
        if (!check_pair(live[i], live[j])) return r;
      }
    }
    return r;
  }
  for (const auto& s : enumerate_support(*e.seed, cap)) {
    std::vector<std::size_t> centers;
    for (std::size_t c = 0; c < g.size(); ++c) {
      if (s.map[c] == 1) centers.push_back(c);
    }
    for (std::size_t i = 0; i < centers.size(); ++i) {
      for (std::size_t j = i + 1; j < centers.size(); ++j) {
        if (!check_pair(centers[i], centers[j])) return r;
      }
    }
  }
  return r;
}

/// Cyclic convolution (a * b)(x) = sum_x' a(x') b(x - x').
[[nodiscard]] inline std::vector<double> cyclic_convolve(const Grid& g, std::span<const double> a,
                                                         std::span<const double> b) {
  if (a.size() != g.size() || b.size() != g.size()) throw std::invalid_argument("convolution operands must match grid");
  std::vector<double> out(g.size(), 0.0);
  for (std::size_t xp = 0; xp < g.size(); ++xp) {
    if (a[xp] == 0.0) continue;
    for (std::size_t x = 0; x < g.size(); ++x) out[x] += a[xp] * b[g.index(g.sub(g.point(x), g.point(xp)))];
  }
  return out;
}

/// mean(Phi) * mean(Psi): the foreground mean field an effectively disjoint expansion has.
[[nodiscard]] inline std::vector<double> expansion_mean_field_product(const OcclusionModel& model,
                                                                      const EstimateOptions& opt = {}) {
  if (!model.holds<ExpansionModel>()) throw std::invalid_argument("mean-field product needs an expansion model");
  const auto& e = model.as<ExpansionModel>();
  const auto seed_mean = marginal_field(*e.seed, opt).label_plane(1);
  const auto blob_mean = e.blobs.mean_field(model.grid());
  return cyclic_convolve(model.grid(), seed_mean, blob_mean);
}

/// A synthesized composite and the labels that produced it.
struct Texture {
  Image image;
  LabelMap labels;
};

/// occlude(sources, sample_label_map(model, seed)).
[[nodiscard]] inline Texture synthesize_texture(const OcclusionModel& model, std::span<const Image> sources,
                                                std::uint64_t seed) {
  check_sources(sources, model.grid(), model.num_labels());
  LabelMap labels = sample_label_map(model, seed);
  Image image = occlude(sources, labels);
  return {std::move(image), std::move(labels)};
}

/// Constant color plus per-channel Gaussian noise, clamped to each factor.
/**
 * `color` holds one digit per factor of `values`. Pixel x draws its noise from
 * CounterRng{derive_seed(seed, x)} by Box-Muller, so the image depends only
 * on the arguments.
 */
[[nodiscard]] inline Image noisy_constant_image(const Grid& grid, const ValueSpace& values,
                                                std::span<const std::uint32_t> color, double noise,
                                                std::uint64_t seed) {
  const auto& fs = values.factors();
  if (color.size() != fs.size()) throw std::invalid_argument("color needs one component per value factor");
  for (std::size_t c = 0; c < fs.size(); ++c) {
    if (color[c] >= fs[c]) throw std::invalid_argument("color component outside its factor");
  }
  if (!(noise >= 0.0)) throw std::invalid_argument("noise must be nonnegative");
  std::vector<std::uint32_t> px(grid.size());
  std::vector<std::uint32_t> d(fs.size());
  constexpr double kTwoPi = 6.283185307179586;
  for (std::size_t x = 0; x < grid.size(); ++x) {
    CounterRng rng{derive_seed(seed, x)};
    for (std::size_t c = 0; c < fs.size(); ++c) {
      const double u1 = rng.uniform();
      const double u2 = rng.uniform();
      const double z = std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(kTwoPi * u2);
      const double v = std::round(static_cast<double>(color[c]) + noise * z);
      d[c] = static_cast<std::uint32_t>(std::clamp(v, 0.0, static_cast<double>(fs[c] - 1)));
    }
    px[x] = values.compose(d);
  }
  return Image{grid, values, std::move(px)};
}

}  // namespace histocube

#endif  // HISTOCUBE_TEXTURE_MODELS_HPP
