#ifndef HISTOCUBE_MODEL_HPP
#define HISTOCUBE_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "histocube/grid.hpp"

/**
 * \file
 * \brief Occlusion models: probability distributions over label functions X -> Z_N.
 */

namespace histocube {

/// Tolerance on total probability mass of explicit distributions.
inline constexpr double kMassTolerance = 1e-12;

/// A label map with its probability.
struct WeightedMap {
  LabelMap map;
  double probability = 0.0;

  friend bool operator==(const WeightedMap&, const WeightedMap&) = default;
};

/// All distinct translates of phi, in ascending order.
[[nodiscard]] inline std::vector<LabelMap> translation_orbit(const LabelMap& phi) {
  const Grid& g = phi.grid();
  std::vector<LabelMap> orbit;
  orbit.reserve(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) orbit.push_back(translate_labels(phi, g.point(i)));
  std::sort(orbit.begin(), orbit.end());
  orbit.erase(std::unique(orbit.begin(), orbit.end()), orbit.end());
  return orbit;
}

/// Smallest member of phi's translation orbit; equal for all members.
[[nodiscard]] inline LabelMap canonical_translate(const LabelMap& phi) { return translation_orbit(phi).front(); }

namespace detail {

inline void check_mass(double total, const char* what) {
  if (std::abs(total - 1.0) > kMassTolerance) {
    throw std::invalid_argument(std::string(what) + " probabilities sum to " + std::to_string(total) +
                                ", expected 1");
  }
}

inline void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0 + kMassTolerance) || !std::isfinite(p)) {
    throw std::invalid_argument(std::string(what) + " probability " + std::to_string(p) + " outside [0, 1]");
  }
}

inline void check_probability_vector(const std::vector<double>& p, const char* what) {
  if (p.empty()) throw std::invalid_argument(std::string(what) + " needs at least one label");
  double total = 0.0;
  for (const double v : p) {
    check_probability(v, what);
    total += v;
  }
  check_mass(total, what);
}

}  // namespace detail

/// Explicit sparse table of (label map, probability); zero entries are dropped.
struct TableModel {
  Grid grid;
  int num_labels = 1;
  std::vector<WeightedMap> entries;

  void validate() {
    double total = 0.0;
    std::set<std::vector<int>> seen;
    for (const auto& e : entries) {
      if (e.map.grid() != grid || e.map.num_labels() != num_labels) {
        throw std::invalid_argument("table entry does not match the model grid or label count");
      }
      detail::check_probability(e.probability, "table");
      if (!seen.insert({e.map.labels().begin(), e.map.labels().end()}).second) {
        throw std::invalid_argument("table lists the same label map twice");
      }
      total += e.probability;
    }
    detail::check_mass(total, "table");
    std::erase_if(entries, [](const WeightedMap& e) { return e.probability == 0.0; });
  }

  friend bool operator==(const TableModel&, const TableModel&) = default;
};

/// Independent identical spins: P(phi) = prod_x p[phi(x)].
struct IidSpinner {
  Grid grid;
  std::vector<double> probs;

  void validate() const { detail::check_probability_vector(probs, "spinner"); }

  friend bool operator==(const IidSpinner&, const IidSpinner&) = default;
};

/// Independent spins with a per-pixel probability vector (generally not flat).
struct PixelSpinner {
  Grid grid;
  int num_labels = 1;
  std::vector<std::vector<double>> probs;  // |X| vectors of length num_labels

  void validate() const {
    if (probs.size() != grid.size()) {
      throw std::invalid_argument("pixel spinner needs one probability vector per pixel");
    }
    for (const auto& p : probs) {
      if (static_cast<int>(p.size()) != num_labels) {
        throw std::invalid_argument("pixel spinner vector length does not match label count");
      }
      detail::check_probability_vector(p, "pixel spinner");
    }
  }

  friend bool operator==(const PixelSpinner&, const PixelSpinner&) = default;
};

/// Translation-orbit classes: each representative's orbit carries a total mass,
/// shared equally among the orbit's distinct members.
struct ClassTable {
  Grid grid;
  int num_labels = 1;
  std::vector<WeightedMap> classes;  // (representative, class mass)

  void validate() const {
    double total = 0.0;
    std::set<LabelMap> canon;
    for (const auto& c : classes) {
      if (c.map.grid() != grid || c.map.num_labels() != num_labels) {
        throw std::invalid_argument("class representative does not match the model grid or label count");
      }
      detail::check_probability(c.probability, "class");
      if (!canon.insert(canonical_translate(c.map)).second) {
        throw std::invalid_argument("two class representatives lie in the same translation orbit");
      }
      total += c.probability;
    }
    detail::check_mass(total, "class table");
  }

  friend bool operator==(const ClassTable&, const ClassTable&) = default;
};

/// Distribution of blob shapes anchored at the origin.
class BlobDistribution {
 public:
  struct Blob {
    std::vector<Point> offsets;
    double probability = 0.0;

    friend bool operator==(const Blob&, const Blob&) = default;
  };

  /// All offsets within Euclidean distance `radius` of the origin.
  struct Disk {
    int radius = 0;
    double probability = 0.0;

    friend bool operator==(const Disk&, const Disk&) = default;
  };

  BlobDistribution() = default;

  static BlobDistribution table(std::vector<Blob> blobs) {
    BlobDistribution d;
    double total = 0.0;
    if (blobs.empty()) throw std::invalid_argument("blob table is empty");
    for (const auto& b : blobs) {
      if (b.offsets.empty()) throw std::invalid_argument("blob offset sets must be nonempty");
      detail::check_probability(b.probability, "blob");
      total += b.probability;
    }
    detail::check_mass(total, "blob");
    d.rep_ = std::move(blobs);
    return d;
  }

  static BlobDistribution disks(std::vector<Disk> radii) {
    BlobDistribution d;
    double total = 0.0;
    if (radii.empty()) throw std::invalid_argument("disk radius distribution is empty");
    for (const auto& r : radii) {
      if (r.radius < 0) throw std::invalid_argument("disk radius must be nonnegative");
      detail::check_probability(r.probability, "disk radius");
      total += r.probability;
    }
    detail::check_mass(total, "disk radius");
    d.rep_ = std::move(radii);
    return d;
  }

  /// The point blob {(0, 0)} with probability one.
  static BlobDistribution point() { return table({Blob{{{0, 0}}, 1.0}}); }

  [[nodiscard]] bool is_disks() const noexcept { return std::holds_alternative<std::vector<Disk>>(rep_); }
  [[nodiscard]] const std::vector<Blob>& blob_table() const { return std::get<std::vector<Blob>>(rep_); }
  [[nodiscard]] const std::vector<Disk>& disk_table() const { return std::get<std::vector<Disk>>(rep_); }

  /// Checks every offset is a valid offset on `grid`.
  void validate(const Grid& grid) const {
    if (is_disks()) return;
    for (const auto& b : blob_table()) {
      for (const auto& o : b.offsets) {
        if (std::abs(o.x) >= grid.width() || std::abs(o.y) >= grid.height()) {
          throw std::invalid_argument("blob offset (" + std::to_string(o.x) + "," + std::to_string(o.y) +
                                      ") is not a valid offset on a " + std::to_string(grid.width()) + "x" +
                                      std::to_string(grid.height()) + " grid");
        }
      }
    }
  }

  /// Nonzero-probability blobs as canonical, sorted, deduplicated grid points.
  [[nodiscard]] std::vector<Blob> support(const Grid& grid) const {
    std::vector<Blob> out;
    auto canonical = [&grid](std::vector<Point> pts) {
      for (auto& p : pts) p = grid.wrap(p);
      std::sort(pts.begin(), pts.end(), [&grid](Point a, Point b) { return grid.index(a) < grid.index(b); });
      pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
      return pts;
    };
    if (is_disks()) {
      for (const auto& d : disk_table()) {
        if (d.probability == 0.0) continue;
        std::vector<Point> pts;
        for (int dy = -d.radius; dy <= d.radius; ++dy) {
          for (int dx = -d.radius; dx <= d.radius; ++dx) {
            if (dx * dx + dy * dy <= d.radius * d.radius) pts.push_back({dx, dy});
          }
        }
        out.push_back({canonical(std::move(pts)), d.probability});
      }
    } else {
      for (const auto& b : blob_table()) {
        if (b.probability == 0.0) continue;
        out.push_back({canonical(b.offsets), b.probability});
      }
    }
    return out;
  }

  /// Mean blob field Psi-bar(x) = sum_psi P(psi) psi(x).
  [[nodiscard]] std::vector<double> mean_field(const Grid& grid) const {
    std::vector<double> mean(grid.size(), 0.0);
    for (const auto& b : support(grid)) {
      for (const auto& o : b.offsets) mean[grid.index(o)] += b.probability;
    }
    return mean;
  }

  friend bool operator==(const BlobDistribution&, const BlobDistribution&) = default;

 private:
  std::variant<std::vector<Blob>, std::vector<Disk>> rep_{std::vector<Blob>{Blob{{{0, 0}}, 1.0}}};
};

class OcclusionModel;
using ModelPtr = std::shared_ptr<const OcclusionModel>;

/// Phi expanded by Psi: every seed point is replaced by an independently drawn blob.
struct ExpansionModel {
  ModelPtr seed;
  BlobDistribution blobs;

  friend bool operator==(const ExpansionModel& a, const ExpansionModel& b);
};

/// Phi laid over Psi through Sigma-shaped holes; bottom labels shifted by N_phi.
struct OverlayModel {
  ModelPtr top;
  ModelPtr bottom;
  ModelPtr mask;

  friend bool operator==(const OverlayModel& a, const OverlayModel& b);
};

/// A distribution over label functions X -> Z_N. Immutable after construction.
class OcclusionModel {
 public:
  using Representation = std::variant<TableModel, IidSpinner, PixelSpinner, ClassTable, ExpansionModel, OverlayModel>;

  explicit OcclusionModel(Representation rep) : rep_{std::move(rep)} {
    std::visit([this](auto& r) { validate(r); }, rep_);
  }

  [[nodiscard]] const Representation& representation() const noexcept { return rep_; }
  [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
  [[nodiscard]] int num_labels() const noexcept { return num_labels_; }

  template <typename T>
  [[nodiscard]] bool holds() const noexcept {
    return std::holds_alternative<T>(rep_);
  }
  template <typename T>
  [[nodiscard]] const T& as() const {
    return std::get<T>(rep_);
  }

  [[nodiscard]] std::string kind() const {
    return std::visit(
        [](const auto& r) -> std::string {
          using T = std::decay_t<decltype(r)>;
          if constexpr (std::is_same_v<T, TableModel>) return "table";
          if constexpr (std::is_same_v<T, IidSpinner>) return "iid_spinner";
          if constexpr (std::is_same_v<T, PixelSpinner>) return "pixel_spinner";
          if constexpr (std::is_same_v<T, ClassTable>) return "class_table";
          if constexpr (std::is_same_v<T, ExpansionModel>) return "expansion";
          if constexpr (std::is_same_v<T, OverlayModel>) return "overlay";
        },
        rep_);
  }

  friend bool operator==(const OcclusionModel& a, const OcclusionModel& b) { return a.rep_ == b.rep_; }

 private:
  void validate(TableModel& r) {
    r.validate();
    grid_ = r.grid;
    num_labels_ = r.num_labels;
  }
  void validate(IidSpinner& r) {
    r.validate();
    grid_ = r.grid;
    num_labels_ = static_cast<int>(r.probs.size());
  }
  void validate(PixelSpinner& r) {
    r.validate();
    grid_ = r.grid;
    num_labels_ = r.num_labels;
  }
  void validate(ClassTable& r) {
    r.validate();
    grid_ = r.grid;
    num_labels_ = r.num_labels;
  }
  void validate(ExpansionModel& r) {
    if (!r.seed) throw std::invalid_argument("expansion needs a seed model");
    if (r.seed->num_labels() != 2) throw std::invalid_argument("expansion seed model must be binary");
    r.blobs.validate(r.seed->grid());
    grid_ = r.seed->grid();
    num_labels_ = 2;
  }
  void validate(OverlayModel& r) {
    if (!r.top || !r.bottom || !r.mask) throw std::invalid_argument("overlay needs top, bottom and mask models");
    if (r.mask->num_labels() != 2) throw std::invalid_argument("overlay mask model must be binary");
    if (r.top->grid() != r.bottom->grid() || r.top->grid() != r.mask->grid()) {
      throw std::invalid_argument("overlay children must share one grid");
    }
    grid_ = r.top->grid();
    num_labels_ = r.top->num_labels() + r.bottom->num_labels();
  }

  Representation rep_;
  Grid grid_;
  int num_labels_ = 1;
};

inline bool operator==(const ExpansionModel& a, const ExpansionModel& b) {
  return a.blobs == b.blobs && (a.seed == b.seed || (a.seed && b.seed && *a.seed == *b.seed));
}

inline bool operator==(const OverlayModel& a, const OverlayModel& b) {
  auto same = [](const ModelPtr& p, const ModelPtr& q) { return p == q || (p && q && *p == *q); };
  return same(a.top, b.top) && same(a.bottom, b.bottom) && same(a.mask, b.mask);
}

// Factories returning shared models, the form composite nodes hold.

[[nodiscard]] inline ModelPtr make_table(Grid grid, int num_labels, std::vector<WeightedMap> entries) {
  return std::make_shared<const OcclusionModel>(TableModel{grid, num_labels, std::move(entries)});
}

[[nodiscard]] inline ModelPtr make_iid_spinner(Grid grid, std::vector<double> probs) {
  return std::make_shared<const OcclusionModel>(IidSpinner{grid, std::move(probs)});
}

/// The i.i.d. coin: label 1 with probability rho at every pixel.
[[nodiscard]] inline ModelPtr make_coin(Grid grid, double rho) { return make_iid_spinner(grid, {1.0 - rho, rho}); }

[[nodiscard]] inline ModelPtr make_pixel_spinner(Grid grid, int num_labels, std::vector<std::vector<double>> probs) {
  return std::make_shared<const OcclusionModel>(PixelSpinner{grid, num_labels, std::move(probs)});
}

[[nodiscard]] inline ModelPtr make_class_table(Grid grid, int num_labels, std::vector<WeightedMap> classes) {
  return std::make_shared<const OcclusionModel>(ClassTable{grid, num_labels, std::move(classes)});
}

/// Model concentrated on one label map.
[[nodiscard]] inline ModelPtr make_deterministic(const LabelMap& phi) {
  return make_table(phi.grid(), phi.num_labels(), {WeightedMap{phi, 1.0}});
}

[[nodiscard]] inline ModelPtr make_constant(Grid grid, int num_labels, int label) {
  return make_deterministic(LabelMap::constant(grid, num_labels, label));
}

[[nodiscard]] inline ModelPtr make_expansion(ModelPtr seed, BlobDistribution blobs) {
  return std::make_shared<const OcclusionModel>(ExpansionModel{std::move(seed), std::move(blobs)});
}

[[nodiscard]] inline ModelPtr make_overlay(ModelPtr top, ModelPtr bottom, ModelPtr mask) {
  return std::make_shared<const OcclusionModel>(OverlayModel{std::move(top), std::move(bottom), std::move(mask)});
}

}  // namespace histocube

#endif  // HISTOCUBE_MODEL_HPP
