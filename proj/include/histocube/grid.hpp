#ifndef HISTOCUBE_GRID_HPP
#define HISTOCUBE_GRID_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

/**
 * \file
 * \brief Finite pixel-location and pixel-value groups, images, weighting
 * functions and dense histogram cubes.
 */

namespace histocube {

/// A point of the location group Z_W x Z_H, or a signed offset.
struct Point {
  int x = 0;
  int y = 0;

  friend constexpr bool operator==(const Point&, const Point&) = default;
  friend constexpr auto operator<=>(const Point&, const Point&) = default;
};

/// The cyclic location group X = Z_width x Z_height.
/**
 * Pixels are stored row-major: index = y * width + x. All arithmetic wraps
 * toroidally.
 */
class Grid {
 public:
  Grid() = default;

  Grid(int width, int height) : width_{width}, height_{height} {
    if (width < 1 || height < 1) {
      throw std::invalid_argument("grid dimensions must be positive, got " + std::to_string(width) + "x" +
                                  std::to_string(height));
    }
  }

  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] std::size_t size() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  /// Reduces any integer point to its canonical representative.
  [[nodiscard]] Point wrap(Point p) const noexcept { return {mod(p.x, width_), mod(p.y, height_)}; }

  [[nodiscard]] std::size_t index(Point p) const noexcept {
    const Point q = wrap(p);
    return static_cast<std::size_t>(q.y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(q.x);
  }

  [[nodiscard]] Point point(std::size_t index) const noexcept {
    return {static_cast<int>(index % static_cast<std::size_t>(width_)),
            static_cast<int>(index / static_cast<std::size_t>(width_))};
  }

  [[nodiscard]] Point add(Point a, Point b) const noexcept { return wrap({a.x + b.x, a.y + b.y}); }
  [[nodiscard]] Point sub(Point a, Point b) const noexcept { return wrap({a.x - b.x, a.y - b.y}); }
  [[nodiscard]] Point neg(Point a) const noexcept { return wrap({-a.x, -a.y}); }

  /// Index of (index(a) + b) without materializing points twice.
  [[nodiscard]] std::size_t add_index(std::size_t a, Point b) const noexcept { return index(add(point(a), b)); }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  static int mod(int v, int m) noexcept {
    const int r = v % m;
    return r < 0 ? r + m : r;
  }

  int width_ = 1;
  int height_ = 1;
};

/// Signed representative of a canonical grid point, in (-n/2, n/2].
[[nodiscard]] inline Point centered(const Grid& grid, Point p) noexcept {
  const Point q = grid.wrap(p);
  auto center = [](int v, int n) { return v > n / 2 ? v - n : v; };
  return {center(q.x, grid.width()), center(q.y, grid.height())};
}

/// The value group Y, a product of cyclic factors flattened to one index.
/**
 * The first factor is the most significant digit: for factors {256, 256, 256}
 * the triple (r, g, b) has index r * 65536 + g * 256 + b.
 */
class ValueSpace {
 public:
  ValueSpace() = default;

  explicit ValueSpace(std::vector<std::uint32_t> factors) : factors_{std::move(factors)} {
    if (factors_.empty()) {
      throw std::invalid_argument("value space needs at least one factor");
    }
    cardinality_ = 1;
    for (const auto f : factors_) {
      if (f == 0) {
        throw std::invalid_argument("value space factors must be positive");
      }
      cardinality_ *= f;
      if (cardinality_ > (std::uint64_t{1} << 32)) {
        throw std::invalid_argument("value space too large for 32-bit indices");
      }
    }
  }

  static ValueSpace cyclic(std::uint32_t n) { return ValueSpace{{n}}; }

  [[nodiscard]] const std::vector<std::uint32_t>& factors() const noexcept { return factors_; }
  [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(cardinality_); }

  [[nodiscard]] std::vector<std::uint32_t> decompose(std::uint32_t value) const {
    std::vector<std::uint32_t> digits(factors_.size());
    for (std::size_t i = factors_.size(); i-- > 0;) {
      digits[i] = value % factors_[i];
      value /= factors_[i];
    }
    return digits;
  }

  [[nodiscard]] std::uint32_t compose(std::span<const std::uint32_t> digits) const {
    if (digits.size() != factors_.size()) {
      throw std::invalid_argument("digit count does not match value space factors");
    }
    std::uint64_t value = 0;
    for (std::size_t i = 0; i < factors_.size(); ++i) {
      if (digits[i] >= factors_[i]) {
        throw std::out_of_range("digit out of range for its factor");
      }
      value = value * factors_[i] + digits[i];
    }
    return static_cast<std::uint32_t>(value);
  }

  /// Group addition, factor by factor.
  [[nodiscard]] std::uint32_t add(std::uint32_t a, std::uint32_t b) const { return combine(a, b, +1); }
  [[nodiscard]] std::uint32_t sub(std::uint32_t a, std::uint32_t b) const { return combine(a, b, -1); }

  friend bool operator==(const ValueSpace&, const ValueSpace&) = default;

 private:
  [[nodiscard]] std::uint32_t combine(std::uint32_t a, std::uint32_t b, int sign) const {
    if (factors_.size() == 1) {
      const std::uint64_t n = factors_[0];
      return static_cast<std::uint32_t>(sign > 0 ? (a + std::uint64_t{b}) % n : (a + n - b % n) % n);
    }
    auto da = decompose(a);
    const auto db = decompose(b);
    for (std::size_t i = 0; i < factors_.size(); ++i) {
      const std::uint64_t n = factors_[i];
      da[i] = static_cast<std::uint32_t>(sign > 0 ? (da[i] + std::uint64_t{db[i]}) % n : (da[i] + n - db[i]) % n);
    }
    return compose(da);
  }

  std::vector<std::uint32_t> factors_{1};
  std::uint64_t cardinality_ = 1;
};

/// An image f: X -> Y, stored as row-major value indices.
class Image {
 public:
  Image() = default;

  Image(Grid grid, ValueSpace values, std::vector<std::uint32_t> pixels)
      : grid_{grid}, values_{std::move(values)}, pixels_{std::move(pixels)} {
    if (pixels_.size() != grid_.size()) {
      throw std::invalid_argument("pixel count does not match grid size");
    }
    for (const auto v : pixels_) {
      if (v >= values_.size()) {
        throw std::out_of_range("pixel value " + std::to_string(v) + " outside value space of size " +
                                std::to_string(values_.size()));
      }
    }
  }

  static Image constant(Grid grid, ValueSpace values, std::uint32_t value) {
    return Image{grid, std::move(values), std::vector<std::uint32_t>(grid.size(), value)};
  }

  [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
  [[nodiscard]] const ValueSpace& values() const noexcept { return values_; }
  [[nodiscard]] std::span<const std::uint32_t> pixels() const noexcept { return pixels_; }
  [[nodiscard]] std::uint32_t operator[](std::size_t i) const noexcept { return pixels_[i]; }
  [[nodiscard]] std::uint32_t at(Point p) const noexcept { return pixels_[grid_.index(p)]; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  Grid grid_;
  ValueSpace values_;
  std::vector<std::uint32_t> pixels_;
};

/// A label function X -> Z_N.
class LabelMap {
 public:
  LabelMap() = default;

  LabelMap(Grid grid, int num_labels, std::vector<int> labels)
      : grid_{grid}, num_labels_{num_labels}, labels_{std::move(labels)} {
    if (num_labels_ < 1) {
      throw std::invalid_argument("label maps need at least one label");
    }
    if (labels_.size() != grid_.size()) {
      throw std::invalid_argument("label count does not match grid size");
    }
    for (const int l : labels_) {
      if (l < 0 || l >= num_labels_) {
        throw std::out_of_range("label " + std::to_string(l) + " outside [0, " + std::to_string(num_labels_) + ")");
      }
    }
  }

  static LabelMap constant(Grid grid, int num_labels, int label) {
    return LabelMap{grid, num_labels, std::vector<int>(grid.size(), label)};
  }

  [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
  [[nodiscard]] int num_labels() const noexcept { return num_labels_; }
  [[nodiscard]] std::span<const int> labels() const noexcept { return labels_; }
  [[nodiscard]] int operator[](std::size_t i) const noexcept { return labels_[i]; }
  [[nodiscard]] int at(Point p) const noexcept { return labels_[grid_.index(p)]; }

  /// Number of pixels carrying label n, i.e. |phi^{-1}{n}|.
  [[nodiscard]] std::size_t count(int n) const noexcept {
    return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), n));
  }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
  friend auto operator<=>(const LabelMap& a, const LabelMap& b) {
    if (auto c = a.num_labels_ <=> b.num_labels_; c != 0) return c;
    return a.labels_ <=> b.labels_;
  }

 private:
  Grid grid_;
  int num_labels_ = 1;
  std::vector<int> labels_;
};

/// Nonnegative window w over X summing to one.
class WeightingFunction {
 public:
  /// Nonzero weight at a signed offset.
  struct Tap {
    Point offset;
    double weight;
  };

  static constexpr double kSumTolerance = 1e-12;
  static constexpr double kRenormalizeTolerance = 1e-6;

  WeightingFunction() = default;

  /// Builds a window from dense weights.
  /**
   * Sums within 1e-6 of one are renormalized; anything further off is an
   * error. When `support_radius` is given, every nonzero weight must lie at a
   * signed offset with |dx|, |dy| <= radius.
   */
  WeightingFunction(Grid grid, std::vector<double> weights, std::optional<int> support_radius = std::nullopt)
      : grid_{grid}, weights_{std::move(weights)}, support_radius_{support_radius} {
    if (weights_.size() != grid_.size()) {
      throw std::invalid_argument("weight count does not match grid size");
    }
    double sum = 0.0;
    for (const double v : weights_) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument("weights must be finite and nonnegative");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kRenormalizeTolerance) {
      throw std::invalid_argument("weights must sum to one, got " + std::to_string(sum));
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
      for (auto& v : weights_) v /= sum;
    }
    if (support_radius_) {
      const int r = *support_radius_;
      if (r < 0) throw std::invalid_argument("support radius must be nonnegative");
      for (std::size_t i = 0; i < weights_.size(); ++i) {
        if (weights_[i] == 0.0) continue;
        const Point c = signed_offset(grid_.point(i), r);
        if (std::abs(c.x) > r || std::abs(c.y) > r) {
          throw std::invalid_argument("nonzero weight outside the declared support radius");
        }
      }
    }
    taps_.clear();
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      if (weights_[i] > 0.0) {
        const Point p = grid_.point(i);
        taps_.push_back({support_radius_ ? signed_offset(p, *support_radius_) : centered(grid_, p), weights_[i]});
      }
    }
  }

  /// Window from (signed offset, weight) pairs; repeated offsets accumulate.
  static WeightingFunction from_taps(Grid grid, std::span<const Tap> taps, std::optional<int> support_radius) {
    std::vector<double> dense(grid.size(), 0.0);
    for (const auto& t : taps) dense[grid.index(t.offset)] += t.weight;
    return WeightingFunction{grid, std::move(dense), support_radius};
  }

  [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
  [[nodiscard]] std::span<const double> weights() const noexcept { return weights_; }
  [[nodiscard]] double operator[](std::size_t i) const noexcept { return weights_[i]; }
  [[nodiscard]] double at(Point p) const noexcept { return weights_[grid_.index(p)]; }
  [[nodiscard]] std::optional<int> support_radius() const noexcept { return support_radius_; }

  /// Nonzero weights in ascending grid-index order.
  [[nodiscard]] std::span<const Tap> taps() const noexcept { return taps_; }

 private:
  // With a declared radius r, coordinates within r of zero (mod n) are read
  // as the small signed offset.
  [[nodiscard]] Point signed_offset(Point p, int r) const noexcept {
    auto f = [r](int v, int n) { return (v > r && v >= n - r) ? v - n : v; };
    return {f(p.x, grid_.width()), f(p.y, grid_.height())};
  }

  Grid grid_;
  std::vector<double> weights_{1.0};
  std::optional<int> support_radius_;
  std::vector<Tap> taps_{{Point{0, 0}, 1.0}};
};

/// Dense |X| x |Y| cube, value-major: one contiguous plane per level y.
class HistCube {
 public:
  HistCube() = default;

  HistCube(Grid grid, ValueSpace values)
      : grid_{grid}, values_{std::move(values)}, data_(grid_.size() * values_.size(), 0.0) {}

  HistCube(Grid grid, ValueSpace values, std::vector<double> data)
      : grid_{grid}, values_{std::move(values)}, data_{std::move(data)} {
    if (data_.size() != grid_.size() * values_.size()) {
      throw std::invalid_argument("cube data size does not match |X| * |Y|");
    }
  }

  [[nodiscard]] const Grid& grid() const noexcept { return grid_; }
  [[nodiscard]] const ValueSpace& values() const noexcept { return values_; }
  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
  [[nodiscard]] std::span<double> data() noexcept { return data_; }

  [[nodiscard]] double at(std::size_t x, std::size_t y) const noexcept { return data_[y * grid_.size() + x]; }
  [[nodiscard]] double& at(std::size_t x, std::size_t y) noexcept { return data_[y * grid_.size() + x]; }

  [[nodiscard]] std::span<const double> level(std::size_t y) const noexcept {
    return std::span<const double>{data_}.subspan(y * grid_.size(), grid_.size());
  }
  [[nodiscard]] std::span<double> level(std::size_t y) noexcept {
    return std::span<double>{data_}.subspan(y * grid_.size(), grid_.size());
  }

  /// The histogram at pixel x as a vector over Y.
  [[nodiscard]] std::vector<double> histogram(std::size_t x) const {
    std::vector<double> h(values_.size());
    for (std::size_t y = 0; y < h.size(); ++y) h[y] = at(x, y);
    return h;
  }

 private:
  Grid grid_;
  ValueSpace values_;
  std::vector<double> data_;
};

/// Maximum absolute entrywise difference of two equally shaped cubes.
[[nodiscard]] inline double max_abs_difference(const HistCube& a, const HistCube& b) {
  if (a.grid() != b.grid() || a.values() != b.values()) {
    throw std::invalid_argument("cube shapes differ");
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

/// result(x') = f(x' - shift), wrapping cyclically.
[[nodiscard]] inline Image translate_image(const Image& f, Point shift) {
  const Grid& g = f.grid();
  std::vector<std::uint32_t> out(g.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f.at(g.sub(g.point(i), shift));
  return Image{g, f.values(), std::move(out)};
}

/// result(x') = phi(x' - shift).
[[nodiscard]] inline LabelMap translate_labels(const LabelMap& phi, Point shift) {
  const Grid& g = phi.grid();
  std::vector<int> out(g.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = phi.at(g.sub(g.point(i), shift));
  return LabelMap{g, phi.num_labels(), std::move(out)};
}

/// result(x) = w(-x).
[[nodiscard]] inline WeightingFunction reverse_weights(const WeightingFunction& w) {
  const Grid& g = w.grid();
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = w.at(g.neg(g.point(i)));
  return WeightingFunction{g, std::move(out), w.support_radius()};
}

/// Indicator cube of the graph of f: 1 where f(x) = y.
[[nodiscard]] inline HistCube characteristic_cube(const Image& f) {
  HistCube cube{f.grid(), f.values()};
  for (std::size_t x = 0; x < f.grid().size(); ++x) cube.at(x, f[x]) = 1.0;
  return cube;
}

/// Adds a constant of Y to every pixel.
[[nodiscard]] inline Image add_constant(const Image& f, std::uint32_t c) {
  std::vector<std::uint32_t> out(f.pixels().begin(), f.pixels().end());
  for (auto& v : out) v = f.values().add(v, c);
  return Image{f.grid(), f.values(), std::move(out)};
}

/// An arbitrary map q: Y -> Y' given by its table of images.
struct ValueMap {
  ValueSpace source;
  ValueSpace target;
  std::vector<std::uint32_t> image;  // length |source|

  [[nodiscard]] std::uint32_t operator()(std::uint32_t v) const { return image[v]; }

  static ValueMap identity(const ValueSpace& y) {
    std::vector<std::uint32_t> table(y.size());
    std::iota(table.begin(), table.end(), 0U);
    return ValueMap{y, y, std::move(table)};
  }
};

/// Per-factor quantization: keep a factor at a coarser modulus, or drop it.
struct FactorQuantization {
  std::optional<std::uint32_t> modulus;  // nullopt drops the factor

  static FactorQuantization drop() { return {}; }
  static FactorQuantization keep(std::uint32_t m) { return {m}; }

  friend bool operator==(const FactorQuantization&, const FactorQuantization&) = default;
};

namespace detail {

inline ValueSpace quantized_space(const ValueSpace& y, std::span<const FactorQuantization> q) {
  const auto& orig = y.factors();
  if (q.size() != orig.size()) {
    throw std::invalid_argument("quantization needs one entry per value-space factor");
  }
  std::vector<std::uint32_t> kept;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (!q[i].modulus) continue;
    if (*q[i].modulus == 0 || *q[i].modulus > orig[i]) {
      throw std::invalid_argument("quantized modulus " + std::to_string(*q[i].modulus) + " exceeds original " +
                                  std::to_string(orig[i]));
    }
    kept.push_back(*q[i].modulus);
  }
  if (kept.empty()) {
    throw std::invalid_argument("quantization drops every factor");
  }
  return ValueSpace{std::move(kept)};
}

inline std::uint32_t quantize_value(const ValueSpace& y, const ValueSpace& target,
                                    std::span<const FactorQuantization> q, std::uint32_t v) {
  const auto digits = y.decompose(v);
  std::vector<std::uint32_t> out;
  out.reserve(target.factors().size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (!q[i].modulus) continue;
    out.push_back(static_cast<std::uint32_t>(std::uint64_t{digits[i]} * *q[i].modulus / std::uint64_t{y.factors()[i]}));
  }
  return target.compose(out);
}

}  // namespace detail

/// The map Y -> Y' applying floor(v_i * q_i / orig_i) per retained factor.
/// Parses a comma-separated per-factor list such as "8,drop,8".
[[nodiscard]] inline std::vector<FactorQuantization> parse_quantization(std::string_view spec) {
  std::vector<FactorQuantization> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = spec.find(',', pos);
    const std::string_view item = spec.substr(pos, comma == std::string_view::npos ? spec.npos : comma - pos);
    if (item == "drop") {
      out.push_back(FactorQuantization::drop());
    } else {
      std::uint32_t m = 0;
      const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), m);
      if (item.empty() || ec != std::errc{} || end != item.data() + item.size() || m == 0) {
        throw std::invalid_argument("bad quantization entry '" + std::string(item) + "' (want a modulus or 'drop')");
      }
      out.push_back(FactorQuantization::keep(m));
    }
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

[[nodiscard]] inline std::string to_string(std::span<const FactorQuantization> q) {
  std::string out;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (i) out += ',';
    out += q[i].modulus ? std::to_string(*q[i].modulus) : "drop";
  }
  return out;
}

[[nodiscard]] inline ValueMap quantization_map(const ValueSpace& y, std::span<const FactorQuantization> q) {
  ValueSpace target = detail::quantized_space(y, q);
  std::vector<std::uint32_t> table(y.size());
  for (std::uint32_t v = 0; v < y.size(); ++v) table[v] = detail::quantize_value(y, target, q, v);
  return ValueMap{y, std::move(target), std::move(table)};
}

/// Applies a value map q to every pixel: q o f.
[[nodiscard]] inline Image apply_value_map(const Image& f, const ValueMap& q) {
  if (q.source != f.values()) {
    throw std::invalid_argument("value map source does not match the image value space");
  }
  std::vector<std::uint32_t> out(f.grid().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = q(f[i]);
  return Image{f.grid(), q.target, std::move(out)};
}

/// Quantizes pixel values factor by factor (e.g. Z_256^3 -> Z_8^2 keeping R and B).
[[nodiscard]] inline Image quantize_values(const Image& f, std::span<const FactorQuantization> q) {
  ValueSpace target = detail::quantized_space(f.values(), q);
  std::vector<std::uint32_t> out(f.grid().size());
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = detail::quantize_value(f.values(), target, q, f[p]);
  return Image{f.grid(), std::move(target), std::move(out)};
}

}  // namespace histocube

#endif  // HISTOCUBE_GRID_HPP
