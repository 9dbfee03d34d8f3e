#ifndef HISTOCUBE_CLASSIFIER_HPP
#define HISTOCUBE_CLASSIFIER_HPP

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "histocube/grid.hpp"
#include "histocube/local_histogram.hpp"
#include "histocube/parallel.hpp"
#include "histocube/rng.hpp"

/**
 * \file
 * \brief Per-class PCA of local histograms and the nearest shifted-subspace
 * pixel classifier.
 */

namespace histocube {

/// Sampled local histograms, one list per class.
struct TrainingSet {
  std::size_t value_count = 0;
  std::vector<std::vector<std::vector<double>>> histograms;  ///< [class][sample][y]
  std::vector<std::vector<std::size_t>> locations;           ///< [class][sample], pixel indices

  [[nodiscard]] std::size_t num_classes() const noexcept { return histograms.size(); }

  void validate() const {
    if (histograms.empty()) throw std::invalid_argument("training set has no classes");
    if (!locations.empty() && locations.size() != histograms.size()) {
      throw std::invalid_argument("training locations do not match classes");
    }
    for (std::size_t k = 0; k < histograms.size(); ++k) {
      if (histograms[k].empty()) throw std::invalid_argument("class " + std::to_string(k) + " has no samples");
      for (const auto& h : histograms[k]) {
        if (h.size() != value_count) throw std::invalid_argument("histogram length differs from |Y|");
        double s = 0.0;
        for (const double v : h) {
          if (!(v >= 0.0)) throw std::invalid_argument("histogram has a negative entry");
          s += v;
        }
        if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("histogram does not sum to 1");
      }
    }
  }
};

/// Mean histogram and principal directions of one class.
struct ClassSubspace {
  std::vector<double> mean;
  std::vector<std::vector<double>> directions;  ///< orthonormal, length |Y| each
  std::vector<double> singular_values;          ///< descending, one per direction
  std::size_t requested = 0;                    ///< N_k asked for at training time

  [[nodiscard]] bool mean_only() const noexcept { return directions.empty(); }
  bool operator==(const ClassSubspace&) const = default;
};

struct SubspaceClassifier {
  std::size_t value_count = 0;
  std::vector<ClassSubspace> classes;

  [[nodiscard]] std::size_t num_classes() const noexcept { return classes.size(); }
  [[nodiscard]] std::size_t max_directions() const noexcept {
    std::size_t n = 0;
    for (const auto& c : classes) n = std::max(n, c.directions.size());
    return n;
  }
  bool operator==(const SubspaceClassifier&) const = default;

  void validate() const {
    if (classes.empty()) throw std::invalid_argument("classifier has no classes");
    for (const auto& c : classes) {
      if (c.mean.size() != value_count) throw std::invalid_argument("class mean length differs from |Y|");
      if (c.directions.size() != c.singular_values.size()) {
        throw std::invalid_argument("direction and singular value counts differ");
      }
      for (const auto& u : c.directions) {
        if (u.size() != value_count) throw std::invalid_argument("direction length differs from |Y|");
      }
    }
  }
};

/// Singular values at or below this fraction of max(1, sigma_1) count as zero.
inline constexpr double kRankTolerance = 1e-12;

/// Largest |<u_i, u_j> - delta_ij| over the directions of one class.
[[nodiscard]] inline double gram_deviation(const ClassSubspace& c) {
  double worst = 0.0;
  for (std::size_t i = 0; i < c.directions.size(); ++i) {
    for (std::size_t j = 0; j < c.directions.size(); ++j) {
      double d = 0.0;
      for (std::size_t y = 0; y < c.mean.size(); ++y) d += c.directions[i][y] * c.directions[j][y];
      worst = std::max(worst, std::abs(d - (i == j ? 1.0 : 0.0)));
    }
  }
  return worst;
}

/// Fits the mean and top-`components` left singular vectors of the centered samples.
/**
 * Each direction is signed so its largest-magnitude coordinate is positive
 * (lowest index on ties). Directions whose singular value is numerically zero
 * are dropped; a class left with none classifies by distance to its mean.
 */
[[nodiscard]] inline ClassSubspace train_class(std::span<const std::vector<double>> samples, std::size_t components,
                                               std::vector<std::string>* warnings = nullptr) {
  if (samples.empty()) throw std::invalid_argument("class has no samples");
  const std::size_t ny = samples.front().size();
  const std::size_t m = samples.size();
  if (components > std::min(m, ny)) {
    throw std::invalid_argument("requested " + std::to_string(components) + " components but only min(M, |Y|) = " +
                                std::to_string(std::min(m, ny)) + " are available");
  }
  ClassSubspace c;
  c.requested = components;
  c.mean.assign(ny, 0.0);
  for (const auto& h : samples) {
    for (std::size_t y = 0; y < ny; ++y) c.mean[y] += h[y];
  }
  for (auto& v : c.mean) v /= static_cast<double>(m);
  if (components == 0) return c;

  Eigen::MatrixXd centered(ny, m);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t y = 0; y < ny; ++y) centered(y, j) = samples[j][y] - c.mean[y];
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
  const auto& sigma = svd.singularValues();
  const double floor = kRankTolerance * std::max(1.0, sigma.size() > 0 ? sigma(0) : 0.0);
  for (std::size_t n = 0; n < components; ++n) {
    const double s = sigma(static_cast<Eigen::Index>(n));
    if (!(s > floor)) break;
    std::vector<double> u(ny);
    std::size_t pivot = 0;
    for (std::size_t y = 0; y < ny; ++y) {
      u[y] = svd.matrixU()(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(n));
      if (std::abs(u[y]) > std::abs(u[pivot])) pivot = y;
    }
    if (u[pivot] < 0.0) {
      for (auto& v : u) v = -v;
    }
    c.directions.push_back(std::move(u));
    c.singular_values.push_back(s);
  }
  if (warnings && c.directions.size() < components) {
    warnings->push_back(c.directions.empty()
                            ? std::string{"samples are all identical; class reduced to its mean"}
                            : "samples span only " + std::to_string(c.directions.size()) + " of " +
                                  std::to_string(components) + " requested directions");
  }
  return c;
}

/// Trains every class with its own component count.
[[nodiscard]] inline SubspaceClassifier train(const TrainingSet& training, std::span<const std::size_t> components,
                                              std::vector<std::string>* warnings = nullptr) {
  training.validate();
  if (components.size() != training.num_classes()) {
    throw std::invalid_argument("need one component count per class");
  }
  SubspaceClassifier clf;
  clf.value_count = training.value_count;
  for (std::size_t k = 0; k < training.num_classes(); ++k) {
    std::vector<std::string> local;
    clf.classes.push_back(train_class(training.histograms[k], components[k], &local));
    if (warnings) {
      for (auto& w : local) warnings->push_back("class " + std::to_string(k) + ": " + w);
    }
  }
  return clf;
}

/// Trains every class with the same component count.
[[nodiscard]] inline SubspaceClassifier train(const TrainingSet& training, std::size_t components,
                                              std::vector<std::string>* warnings = nullptr) {
  const std::vector<std::size_t> n(training.num_classes(), components);
  return train(training, n, warnings);
}

namespace detail {

// Compact objective from the running sums S = |h - mean|^2, P_n = <h - mean, u_n>.
inline double objective_from_sums(double s, std::span<const double> p) {
  double d = s;
  for (const double v : p) d -= v * v;
  return d;
}

inline void check_length(const SubspaceClassifier& clf, std::size_t n) {
  if (n != clf.value_count) {
    throw std::invalid_argument("histogram length " + std::to_string(n) + " differs from classifier |Y| = " +
                                std::to_string(clf.value_count));
  }
}

}  // namespace detail

/// |h - mean_k|^2 - sum_n <h - mean_k, u_kn>^2, accumulated over y in order.
[[nodiscard]] inline double subspace_objective(std::span<const double> h, const ClassSubspace& c) {
  double s = 0.0;
  std::vector<double> p(c.directions.size(), 0.0);
  for (std::size_t y = 0; y < h.size(); ++y) {
    const double d = h[y] - c.mean[y];
    s += d * d;
    for (std::size_t n = 0; n < p.size(); ++n) p[n] += d * c.directions[n][y];
  }
  return detail::objective_from_sums(s, p);
}

/// |h - mean_k - sum_n <h - mean_k, u_kn> u_kn|^2, the explicit residual.
[[nodiscard]] inline double subspace_residual(std::span<const double> h, const ClassSubspace& c) {
  std::vector<double> r(h.size());
  for (std::size_t y = 0; y < h.size(); ++y) r[y] = h[y] - c.mean[y];
  std::vector<double> coeff;
  for (const auto& u : c.directions) {
    double a = 0.0;
    for (std::size_t y = 0; y < h.size(); ++y) a += r[y] * u[y];
    coeff.push_back(a);
  }
  for (std::size_t n = 0; n < coeff.size(); ++n) {
    for (std::size_t y = 0; y < h.size(); ++y) r[y] -= coeff[n] * c.directions[n][y];
  }
  double s = 0.0;
  for (const double v : r) s += v * v;
  return s;
}

/// Class whose shifted subspace is nearest to h; ties go to the lowest class.
[[nodiscard]] inline int classify_pixel(std::span<const double> h, const SubspaceClassifier& clf) {
  detail::check_length(clf, h.size());
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < clf.num_classes(); ++k) {
    const double d = subspace_objective(h, clf.classes[k]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

/// Per-pixel labels from running sums over the levels of LH_w f.
/**
 * Only `threads` level planes and K (N + 1) accumulators per pixel are held at
 * once. Levels are computed in parallel and folded into the accumulators in
 * increasing y, split over pixel ranges, so every pixel sees the same
 * operations as classify_pixel regardless of the thread count.
 */
[[nodiscard]] inline LabelMap classify_image(const Image& f, const WeightingFunction& w,
                                             const SubspaceClassifier& clf, FilterPlan plan = FilterPlan::noncyclic(),
                                             unsigned threads = 1) {
  clf.validate();
  detail::check_length(clf, f.values().size());
  const std::size_t nx = f.grid().size();
  const std::size_t ny = f.values().size();
  const std::size_t k_count = clf.num_classes();
  plan.threads = 1;
  const LocalHistogram lh{f, w, plan};

  // Per class: one S plane followed by one P plane per direction.
  std::vector<std::size_t> base(k_count + 1, 0);
  for (std::size_t k = 0; k < k_count; ++k) base[k + 1] = base[k] + (1 + clf.classes[k].directions.size()) * nx;
  std::vector<double> acc(base.back(), 0.0);

  const std::size_t batch = std::max<std::size_t>(1, threads);
  std::vector<std::vector<double>> planes(std::min(batch, ny), std::vector<double>(nx));
  for (std::size_t y0 = 0; y0 < ny; y0 += batch) {
    const std::size_t count = std::min(batch, ny - y0);
    parallel_for(count, threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) lh.level(static_cast<std::uint32_t>(y0 + i), planes[i]);
    });
    parallel_for(nx, threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t y = y0 + i;
        const auto& h = planes[i];
        for (std::size_t k = 0; k < k_count; ++k) {
          const auto& c = clf.classes[k];
          const double mean = c.mean[y];
          double* s = acc.data() + base[k];
          for (std::size_t x = begin; x < end; ++x) {
            const double d = h[x] - mean;
            s[x] += d * d;
          }
          for (std::size_t n = 0; n < c.directions.size(); ++n) {
            const double u = c.directions[n][y];
            double* p = s + (n + 1) * nx;
            for (std::size_t x = begin; x < end; ++x) p[x] += (h[x] - mean) * u;
          }
        }
      }
    });
  }

  std::vector<int> labels(nx, 0);
  parallel_for(nx, threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> p;
    for (std::size_t x = begin; x < end; ++x) {
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < k_count; ++k) {
        const std::size_t nd = clf.classes[k].directions.size();
        const double* s = acc.data() + base[k];
        p.resize(nd);
        for (std::size_t n = 0; n < nd; ++n) p[n] = s[(n + 1) * nx + x];
        const double d = detail::objective_from_sums(s[x], p);
        if (d < best_d) {
          best_d = d;
          labels[x] = static_cast<int>(k);
        }
      }
    }
  });
  return LabelMap{f.grid(), static_cast<int>(k_count), std::move(labels)};
}

/// Materializes the whole cube and applies classify_pixel at every pixel.
[[nodiscard]] inline LabelMap classify_image_reference(const Image& f, const WeightingFunction& w,
                                                       const SubspaceClassifier& clf,
                                                       FilterPlan plan = FilterPlan::noncyclic()) {
  clf.validate();
  detail::check_length(clf, f.values().size());
  const HistCube cube = LocalHistogram{f, w, plan}.cube();
  std::vector<int> labels(f.grid().size());
  for (std::size_t x = 0; x < labels.size(); ++x) labels[x] = classify_pixel(cube.histogram(x), clf);
  return LabelMap{f.grid(), static_cast<int>(clf.num_classes()), std::move(labels)};
}

/// Pixels labeled k at least `margin` pixels from every border, in index order.
[[nodiscard]] inline std::vector<std::size_t> eligible_points(const LabelMap& labels, int k, int margin) {
  if (margin < 0) throw std::invalid_argument("margin must be nonnegative");
  const Grid& g = labels.grid();
  std::vector<std::size_t> out;
  for (int y = margin; y < g.height() - margin; ++y) {
    for (int x = margin; x < g.width() - margin; ++x) {
      const std::size_t i = g.index({x, y});
      if (labels[i] == k) out.push_back(i);
    }
  }
  return out;
}

/// M distinct eligible pixels drawn uniformly without replacement, sorted by index.
[[nodiscard]] inline std::vector<std::size_t> sample_training_points(const LabelMap& labels, int k, std::size_t m,
                                                                     int margin, std::uint64_t seed) {
  auto pool = eligible_points(labels, k, margin);
  if (pool.size() < m) {
    throw std::invalid_argument("class " + std::to_string(k) + " has " + std::to_string(pool.size()) +
                                " eligible points at margin " + std::to_string(margin) + ", fewer than M = " +
                                std::to_string(m));
  }
  CounterRng rng{seed};
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(m);
  std::sort(pool.begin(), pool.end());
  return pool;
}

/// Samples M local histograms per class from a labeled image.
/**
 * Class k draws its points with derive_seed(seed, k). A negative margin means
 * the window's support radius.
 */
[[nodiscard]] inline TrainingSet build_training_set(const Image& f, const LabelMap& truth, const WeightingFunction& w,
                                                    int num_classes, std::size_t m, int margin, std::uint64_t seed,
                                                    FilterPlan plan = FilterPlan::noncyclic()) {
  if (f.grid() != truth.grid()) throw std::invalid_argument("label map is not aligned with the image");
  if (num_classes < 1) throw std::invalid_argument("need at least one class");
  if (margin < 0) margin = w.support_radius().value_or(0);
  const LocalHistogram lh{f, w, plan};
  TrainingSet t;
  t.value_count = f.values().size();
  for (int k = 0; k < num_classes; ++k) {
    auto points = sample_training_points(truth, k, m, margin, derive_seed(seed, static_cast<std::uint64_t>(k)));
    std::vector<std::vector<double>> hs;
    for (const auto x : points) hs.push_back(lh.at(x));
    t.histograms.push_back(std::move(hs));
    t.locations.push_back(std::move(points));
  }
  return t;
}

/// Row = true class, column = predicted class.
struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<std::size_t> counts;  ///< row-major K x K
  std::vector<std::size_t> support;  ///< pixels per true class

  [[nodiscard]] std::size_t count(std::size_t truth, std::size_t predicted) const {
    return counts[truth * num_classes + predicted];
  }
  /// Row percentage; rows with no support are all zero.
  [[nodiscard]] double percent(std::size_t truth, std::size_t predicted) const {
    return support[truth] == 0 ? 0.0
                               : 100.0 * static_cast<double>(count(truth, predicted)) /
                                     static_cast<double>(support[truth]);
  }
  [[nodiscard]] double min_diagonal_percent() const {
    double m = 100.0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      if (support[k] > 0) m = std::min(m, percent(k, k));
    }
    return m;
  }
};

/// Confusion counts over pixels whose true label is not ignored.
[[nodiscard]] inline ConfusionMatrix evaluate(const LabelMap& predicted, const LabelMap& truth,
                                              std::span<const int> ignore = {}) {
  if (predicted.grid() != truth.grid()) throw std::invalid_argument("predicted and truth grids differ");
  ConfusionMatrix cm;
  cm.num_classes = static_cast<std::size_t>(std::max(predicted.num_labels(), truth.num_labels()));
  cm.counts.assign(cm.num_classes * cm.num_classes, 0);
  cm.support.assign(cm.num_classes, 0);
  for (std::size_t x = 0; x < truth.grid().size(); ++x) {
    const int t = truth[x];
    if (std::find(ignore.begin(), ignore.end(), t) != ignore.end()) continue;
    ++cm.counts[static_cast<std::size_t>(t) * cm.num_classes + static_cast<std::size_t>(predicted[x])];
    ++cm.support[static_cast<std::size_t>(t)];
  }
  return cm;
}

/// Text table of rounded row percentages, one row per true class.
[[nodiscard]] inline std::string format_confusion(const ConfusionMatrix& cm, std::span<const std::string> names = {}) {
  auto name = [&](std::size_t k) { return k < names.size() ? names[k] : std::to_string(k); };
  std::size_t width = 6;
  for (std::size_t k = 0; k < cm.num_classes; ++k) width = std::max(width, name(k).size() + 1);
  std::ostringstream os;
  os << std::setw(static_cast<int>(width)) << "";
  for (std::size_t k = 0; k < cm.num_classes; ++k) os << std::setw(static_cast<int>(width)) << name(k);
  os << std::setw(10) << "pixels" << '\n';
  for (std::size_t t = 0; t < cm.num_classes; ++t) {
    os << std::setw(static_cast<int>(width)) << name(t);
    for (std::size_t p = 0; p < cm.num_classes; ++p) {
      os << std::setw(static_cast<int>(width)) << std::lround(cm.percent(t, p));
    }
    os << std::setw(10) << cm.support[t] << '\n';
  }
  return os.str();
}

}  // namespace histocube

#endif  // HISTOCUBE_CLASSIFIER_HPP
