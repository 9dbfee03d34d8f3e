#ifndef HISTOCUBE_COMBINATORS_HPP
#define HISTOCUBE_COMBINATORS_HPP

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "histocube/grid.hpp"

/**
 * \file
 * \brief Pointwise operations on label maps: occlusion, expansion and overlay.
 */

namespace histocube {

/// Checks that sources share one grid and value space and that there are `n` of them.
inline void check_sources(std::span<const Image> sources, const Grid& grid, int n) {
  if (static_cast<int>(sources.size()) != n) {
    throw std::invalid_argument("expected " + std::to_string(n) + " source images, got " +
                                std::to_string(sources.size()));
  }
  for (const auto& s : sources) {
    if (s.grid() != grid) throw std::invalid_argument("source image grid does not match the label map");
    if (s.values() != sources.front().values()) {
      throw std::invalid_argument("source images have different value spaces");
    }
  }
}

/// Composite image whose pixel x is taken from sources[phi(x)].
[[nodiscard]] inline Image occlude(std::span<const Image> sources, const LabelMap& phi) {
  check_sources(sources, phi.grid(), phi.num_labels());
  std::vector<std::uint32_t> out(phi.grid().size());
  for (std::size_t x = 0; x < out.size(); ++x) out[x] = sources[static_cast<std::size_t>(phi[x])][x];
  return Image{phi.grid(), sources.front().values(), std::move(out)};
}

/// Union of the blobs blobs[c] translated to every center c with phi(c) = 1.
/**
 * `blobs` holds one offset set per grid point in index order; entries at
 * points where phi is 0 are ignored.
 */
[[nodiscard]] inline LabelMap expand_label_map(const LabelMap& phi, std::span<const std::vector<Point>> blobs) {
  const Grid& g = phi.grid();
  if (phi.num_labels() != 2) throw std::invalid_argument("expansion needs a binary label map");
  if (blobs.size() != g.size()) throw std::invalid_argument("expansion needs one blob per grid point");
  std::vector<int> out(g.size(), 0);
  for (std::size_t c = 0; c < g.size(); ++c) {
    if (phi[c] != 1) continue;
    for (const Point o : blobs[c]) out[g.add_index(c, o)] = 1;
  }
  return LabelMap{g, 2, std::move(out)};
}

/// A pixel claimed by two translated blobs.
struct BlobOverlap {
  std::size_t first_center = 0;
  std::size_t second_center = 0;
  Point pixel;
};

/// First pixel covered by two of the translated blobs, if any.
[[nodiscard]] inline std::optional<BlobOverlap> find_blob_overlap(const LabelMap& phi,
                                                                   std::span<const std::vector<Point>> blobs) {
  const Grid& g = phi.grid();
  if (blobs.size() != g.size()) throw std::invalid_argument("expansion needs one blob per grid point");
  constexpr std::size_t kFree = static_cast<std::size_t>(-1);
  std::vector<std::size_t> owner(g.size(), kFree);
  for (std::size_t c = 0; c < g.size(); ++c) {
    if (phi[c] != 1) continue;
    for (const Point o : blobs[c]) {
      const std::size_t p = g.add_index(c, o);
      if (owner[p] != kFree && owner[p] != c) return BlobOverlap{owner[p], c, g.point(p)};
      owner[p] = c;
    }
  }
  return std::nullopt;
}

/// phi where sigma is 0, psi + N_phi where sigma is 1.
[[nodiscard]] inline LabelMap overlay_label_map(const LabelMap& phi, const LabelMap& psi, const LabelMap& sigma) {
  if (phi.grid() != psi.grid() || phi.grid() != sigma.grid()) {
    throw std::invalid_argument("overlay operands must share one grid");
  }
  if (sigma.num_labels() != 2) throw std::invalid_argument("overlay mask must be binary");
  std::vector<int> out(phi.grid().size());
  for (std::size_t x = 0; x < out.size(); ++x) out[x] = sigma[x] == 0 ? phi[x] : psi[x] + phi.num_labels();
  return LabelMap{phi.grid(), phi.num_labels() + psi.num_labels(), std::move(out)};
}

}  // namespace histocube

#endif  // HISTOCUBE_COMBINATORS_HPP
