#ifndef HISTOCUBE_LOCAL_HISTOGRAM_HPP
#define HISTOCUBE_LOCAL_HISTOGRAM_HPP

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "histocube/fft.hpp"
#include "histocube/grid.hpp"
#include "histocube/parallel.hpp"

/**
 * \file
 * \brief Local histogram transform LH_w f(x, y) = sum_x' w(x') [f(x + x') = y].
 *
 * Every level y is the correlation of the window with the indicator of
 * f^{-1}{y}, equivalently the cyclic convolution of the reversed window with
 * that indicator, so levels can be filtered independently.
 */

namespace histocube {

/// How levels of a local histogram are filtered.
struct FilterPlan {
  enum class Mode {
    direct,              ///< cyclic, sum over window taps
    cyclic_fft,          ///< cyclic, FFT convolution with the reversed window
    noncyclic_weighted,  ///< no wrap; renormalized by in-bounds window mass
    automatic,           ///< cyclic; direct below fft_threshold taps, else FFT
  };

  static constexpr std::size_t kDefaultFftThreshold = 49;

  Mode mode = Mode::automatic;
  std::size_t fft_threshold = kDefaultFftThreshold;
  unsigned threads = 1;

  static FilterPlan direct() { return {Mode::direct}; }
  static FilterPlan fft() { return {Mode::cyclic_fft}; }
  static FilterPlan noncyclic() { return {Mode::noncyclic_weighted}; }

  [[nodiscard]] bool cyclic() const noexcept { return mode != Mode::noncyclic_weighted; }
};

[[nodiscard]] inline std::string_view to_string(FilterPlan::Mode m) {
  switch (m) {
    case FilterPlan::Mode::direct:
      return "direct";
    case FilterPlan::Mode::cyclic_fft:
      return "fft";
    case FilterPlan::Mode::noncyclic_weighted:
      return "noncyclic";
    case FilterPlan::Mode::automatic:
      return "auto";
  }
  return "auto";
}

[[nodiscard]] inline FilterPlan::Mode parse_filter_mode(std::string_view s) {
  if (s == "direct") return FilterPlan::Mode::direct;
  if (s == "fft") return FilterPlan::Mode::cyclic_fft;
  if (s == "noncyclic") return FilterPlan::Mode::noncyclic_weighted;
  if (s == "auto") return FilterPlan::Mode::automatic;
  throw std::invalid_argument("unknown filter mode '" + std::string(s) + "' (expected direct|fft|noncyclic|auto)");
}

/// A local histogram transform prepared for one (image, window, plan).
/**
 * Holds non-owning references to the image and window, which must outlive
 * it. `level` is const and may run concurrently for distinct levels.
 *
 * Direct and noncyclic levels accumulate matching taps in tap order, so a
 * level computed alone is bit-identical to the same level of `cube()`.
 */
class LocalHistogram {
 public:
  LocalHistogram(const Image& f, const WeightingFunction& w, FilterPlan plan = {})
      : f_{&f}, w_{&w}, plan_{plan}, mode_{plan.mode} {
    if (f.grid() != w.grid()) {
      throw std::invalid_argument("image and window grids differ");
    }
    if (mode_ == FilterPlan::Mode::automatic) {
      mode_ = w.taps().size() < plan.fft_threshold ? FilterPlan::Mode::direct : FilterPlan::Mode::cyclic_fft;
    }
    const Grid& g = f.grid();
    counts_.assign(f.values().size(), 0);
    for (const auto v : f.pixels()) ++counts_[v];
    if (mode_ != FilterPlan::Mode::cyclic_fft) {
      start_.assign(counts_.size() + 1, 0);
      for (std::size_t y = 0; y < counts_.size(); ++y) start_[y + 1] = start_[y] + counts_[y];
      by_value_.resize(g.size());
      auto next = start_;
      for (std::size_t x = 0; x < g.size(); ++x) by_value_[next[f[x]]++] = x;
    }
    if (mode_ == FilterPlan::Mode::cyclic_fft) {
      const auto reversed = reverse_weights(w);
      convolver_.emplace(g, reversed.weights());
    }
    if (mode_ == FilterPlan::Mode::noncyclic_weighted) {
      const auto r = w.support_radius();
      if (!r) {
        throw std::invalid_argument("noncyclic filtering needs a window with a bounded support radius");
      }
      if (2 * *r + 1 > g.width() || 2 * *r + 1 > g.height()) {
        throw std::invalid_argument("window support (radius " + std::to_string(*r) + ") exceeds image extent " +
                                    std::to_string(g.width()) + "x" + std::to_string(g.height()));
      }
      build_noncyclic_mass();
    }
  }

  [[nodiscard]] FilterPlan::Mode mode() const noexcept { return mode_; }
  [[nodiscard]] const Grid& grid() const noexcept { return f_->grid(); }
  [[nodiscard]] const ValueSpace& values() const noexcept { return f_->values(); }

  /// Writes level y of LH_w f into out (length |X|).
  void level(std::uint32_t y, std::span<double> out) const {
    if (y >= f_->values().size()) {
      throw std::out_of_range("level " + std::to_string(y) + " outside value space of size " +
                              std::to_string(f_->values().size()));
    }
    if (out.size() != grid().size()) {
      throw std::invalid_argument("level buffer does not match grid size");
    }
    // Values f misses or fills entirely have exact 0/1 levels in every mode.
    if (counts_[y] == 0 || counts_[y] == out.size()) {
      std::fill(out.begin(), out.end(), counts_[y] == 0 ? 0.0 : 1.0);
      return;
    }
    switch (mode_) {
      case FilterPlan::Mode::cyclic_fft:
        fft_level(y, out);
        return;
      case FilterPlan::Mode::noncyclic_weighted:
        scatter_level(y, out, false);
        renormalize(out);
        return;
      default:
        scatter_level(y, out, true);
        return;
    }
  }

  [[nodiscard]] std::vector<double> level(std::uint32_t y) const {
    std::vector<double> out(grid().size());
    level(y, out);
    return out;
  }

  /// The full |X| x |Y| cube.
  [[nodiscard]] HistCube cube() const {
    HistCube out{grid(), values()};
    const std::size_t n = grid().size();
    switch (mode_) {
      case FilterPlan::Mode::cyclic_fft:
        parallel_for(values().size(), plan_.threads, [&](std::size_t begin, std::size_t end) {
          for (std::size_t y = begin; y < end; ++y) fft_level(static_cast<std::uint32_t>(y), out.level(y));
        });
        break;
      case FilterPlan::Mode::noncyclic_weighted: {
        auto data = out.data();
        for_each_tap_noncyclic([&](std::size_t x, std::size_t src, double wt) { data[(*f_)[src] * n + x] += wt; });
        parallel_for(values().size(), plan_.threads,
                     [&](std::size_t begin, std::size_t end) {
                       for (std::size_t y = begin; y < end; ++y) renormalize(out.level(y));
                     });
        break;
      }
      default: {
        auto data = out.data();
        for_each_tap_cyclic([&](std::size_t x, std::size_t src, double wt) { data[(*f_)[src] * n + x] += wt; });
        break;
      }
    }
    for (std::uint32_t y = 0; y < counts_.size(); ++y) {
      if (counts_[y] == n) std::fill(out.level(y).begin(), out.level(y).end(), 1.0);
    }
    return out;
  }

  /// The histogram at a single pixel, over Y.
  [[nodiscard]] std::vector<double> at(std::size_t x) const {
    std::vector<double> h(values().size(), 0.0);
    const Grid& g = grid();
    const Point p = g.point(x);
    if (const auto full = std::find(counts_.begin(), counts_.end(), g.size()); full != counts_.end()) {
      h[static_cast<std::size_t>(full - counts_.begin())] = 1.0;
      return h;
    }
    if (mode_ == FilterPlan::Mode::noncyclic_weighted) {
      bool truncated = false;
      for (const auto& t : w_->taps()) {
        const int sx = p.x + t.offset.x;
        const int sy = p.y + t.offset.y;
        if (sx < 0 || sy < 0 || sx >= g.width() || sy >= g.height()) {
          truncated = true;
          continue;
        }
        h[f_->at({sx, sy})] += t.weight;
      }
      if (truncated) {
        for (auto& v : h) v /= mass_[x];
      }
      return h;
    }
    if (mode_ == FilterPlan::Mode::cyclic_fft) {
      for (std::uint32_t y = 0; y < h.size(); ++y) h[y] = level(y)[x];
      return h;
    }
    for (const auto& t : w_->taps()) h[f_->at(g.add(p, t.offset))] += t.weight;
    return h;
  }

 private:
  // Visits (pixel, source pixel, weight) tap-major, so each pixel sees its
  // taps in the window's tap order.
  template <typename Fn>
  void for_each_tap_cyclic(Fn&& fn) const {
    const Grid& g = grid();
    const int width = g.width();
    const int height = g.height();
    for (const auto& t : w_->taps()) {
      const Point o = g.wrap(t.offset);
      for (int y = 0; y < height; ++y) {
        const int sy = (y + o.y) % height;
        const std::size_t row = static_cast<std::size_t>(y) * width;
        const std::size_t src_row = static_cast<std::size_t>(sy) * width;
        for (int x = 0; x < width; ++x) {
          const int sx = (x + o.x) % width;
          fn(row + x, src_row + sx, t.weight);
        }
      }
    }
  }

  template <typename Fn>
  void for_each_tap_noncyclic(Fn&& fn) const {
    const Grid& g = grid();
    const int width = g.width();
    const int height = g.height();
    for (const auto& t : w_->taps()) {
      const int y0 = std::max(0, -t.offset.y);
      const int y1 = std::min(height, height - t.offset.y);
      const int x0 = std::max(0, -t.offset.x);
      const int x1 = std::min(width, width - t.offset.x);
      for (int y = y0; y < y1; ++y) {
        const std::size_t row = static_cast<std::size_t>(y) * width;
        const std::size_t src_row = static_cast<std::size_t>(y + t.offset.y) * width;
        for (int x = x0; x < x1; ++x) fn(row + x, src_row + x + t.offset.x, t.weight);
      }
    }
  }

  // Adds each tap's weight at x = src - offset for every src holding y. Taps
  // stay outermost, so each pixel sums in tap order exactly as cube() does.
  void scatter_level(std::uint32_t y, std::span<double> out, bool cyclic) const {
    std::fill(out.begin(), out.end(), 0.0);
    const Grid& g = grid();
    const auto first = by_value_.begin() + static_cast<std::ptrdiff_t>(start_[y]);
    const auto last = by_value_.begin() + static_cast<std::ptrdiff_t>(start_[y + 1]);
    for (const auto& t : w_->taps()) {
      for (auto it = first; it != last; ++it) {
        const Point s = g.point(*it);
        if (cyclic) {
          out[g.index(g.sub(s, t.offset))] += t.weight;
          continue;
        }
        const int x = s.x - t.offset.x;
        const int yy = s.y - t.offset.y;
        if (x < 0 || yy < 0 || x >= g.width() || yy >= g.height()) continue;
        out[static_cast<std::size_t>(yy) * static_cast<std::size_t>(g.width()) + static_cast<std::size_t>(x)] +=
            t.weight;
      }
    }
  }

  void build_noncyclic_mass() {
    const Grid& g = grid();
    mass_.assign(g.size(), 0.0);
    std::vector<std::size_t> hits(g.size(), 0);
    for_each_tap_noncyclic([&](std::size_t x, std::size_t, double wt) {
      mass_[x] += wt;
      ++hits[x];
    });
    full_.assign(g.size(), 0);
    for (std::size_t x = 0; x < g.size(); ++x) {
      full_[x] = hits[x] == w_->taps().size() ? 1 : 0;
      if (!full_[x] && !(mass_[x] > 0.0)) {
        throw std::domain_error("window has no in-bounds mass at pixel " + std::to_string(x));
      }
    }
  }

  // Pixels whose window lies fully inside keep the plain sum, so they match
  // the cyclic result exactly.
  void renormalize(std::span<double> plane) const {
    for (std::size_t x = 0; x < plane.size(); ++x) {
      if (!full_[x]) plane[x] /= mass_[x];
    }
  }

  void fft_level(std::uint32_t y, std::span<double> out) const {
    if (counts_[y] == 0 || counts_[y] == out.size()) {
      std::fill(out.begin(), out.end(), counts_[y] == 0 ? 0.0 : 1.0);
      return;
    }
    std::vector<double> indicator(grid().size());
    for (std::size_t x = 0; x < indicator.size(); ++x) indicator[x] = (*f_)[x] == y ? 1.0 : 0.0;
    convolver_->convolve(indicator, out);
    for (auto& v : out) v = std::clamp(v, 0.0, 1.0);
  }

  const Image* f_;
  const WeightingFunction* w_;
  FilterPlan plan_;
  FilterPlan::Mode mode_;
  std::optional<CyclicConvolver> convolver_;
  std::vector<std::size_t> counts_;
  std::vector<std::size_t> start_;     // offsets into by_value_, per value
  std::vector<std::size_t> by_value_;  // pixel indices grouped by value
  std::vector<double> mass_;
  std::vector<unsigned char> full_;
};

/// LH_w f as a dense cube.
[[nodiscard]] inline HistCube local_histogram(const Image& f, const WeightingFunction& w, FilterPlan plan = {}) {
  return LocalHistogram{f, w, plan}.cube();
}

/// A single level of LH_w f, without materializing the cube.
[[nodiscard]] inline std::vector<double> local_histogram_level(const Image& f, const WeightingFunction& w,
                                                               std::uint32_t y, FilterPlan plan = {}) {
  return LocalHistogram{f, w, plan}.level(y);
}

/// Edge-aware transform: out-of-image taps are dropped and the rest renormalized.
[[nodiscard]] inline HistCube noncyclic_local_histogram(const Image& f, const WeightingFunction& w) {
  return LocalHistogram{f, w, FilterPlan::noncyclic()}.cube();
}

/// result(x, y') = sum over y with q(y) = y' of cube(x, y).
[[nodiscard]] inline HistCube bin_histcube(const HistCube& cube, const ValueMap& q) {
  if (q.source != cube.values()) {
    throw std::invalid_argument("value map source does not match the cube value space");
  }
  HistCube out{cube.grid(), q.target};
  for (std::uint32_t y = 0; y < cube.values().size(); ++y) {
    const auto src = cube.level(y);
    auto dst = out.level(q(y));
    for (std::size_t x = 0; x < src.size(); ++x) dst[x] += src[x];
  }
  return out;
}

/// Both sides of (delta_0 (x) omega) * LH_w f = (w~ (x) omega) * 1_f.
struct TensorConvolutionReport {
  HistCube lhs;
  HistCube rhs;
  double max_discrepancy = 0.0;
};

/// Evaluates the single X x Y convolution identity for a function omega on Y.
[[nodiscard]] inline TensorConvolutionReport tensor_convolve_check(const Image& f, const WeightingFunction& w,
                                                                   std::span<const double> omega) {
  const ValueSpace& ys = f.values();
  if (omega.size() != ys.size()) {
    throw std::invalid_argument("omega must have one entry per value");
  }
  const Grid& g = f.grid();
  const HistCube lh = local_histogram(f, w, FilterPlan::direct());
  TensorConvolutionReport report{HistCube{g, ys}, HistCube{g, ys}, 0.0};
  // lhs(x, y) = sum_y' omega(y') LH(x, y - y')
  for (std::uint32_t y = 0; y < ys.size(); ++y) {
    for (std::uint32_t yp = 0; yp < ys.size(); ++yp) {
      if (omega[yp] == 0.0) continue;
      const auto src = lh.level(ys.sub(y, yp));
      auto dst = report.lhs.level(y);
      for (std::size_t x = 0; x < g.size(); ++x) dst[x] += omega[yp] * src[x];
    }
  }
  // rhs(x, y) = sum_{x', y'} w~(x') omega(y') 1_f(x - x', y - y'); the
  // indicator selects y' = y - f(x - x').
  const auto reversed = reverse_weights(w);
  for (std::size_t x = 0; x < g.size(); ++x) {
    const Point px = g.point(x);
    for (const auto& t : reversed.taps()) {
      const std::uint32_t v = f.at(g.sub(px, t.offset));
      for (std::uint32_t y = 0; y < ys.size(); ++y) report.rhs.at(x, y) += t.weight * omega[ys.sub(y, v)];
    }
  }
  report.max_discrepancy = max_abs_difference(report.lhs, report.rhs);
  return report;
}

}  // namespace histocube

#endif  // HISTOCUBE_LOCAL_HISTOGRAM_HPP
