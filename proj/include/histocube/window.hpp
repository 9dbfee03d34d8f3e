#ifndef HISTOCUBE_WINDOW_HPP
#define HISTOCUBE_WINDOW_HPP

#include <charconv>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "histocube/grid.hpp"

namespace histocube {

/// Parsed form of a window spec string.
/**
 * Grammar: `delta`, `box:R`, or `center-weighted:R[:c0]`.
 *
 * `box:R` is uniform over the (2R+1)^2 square. `center-weighted:R:c0` puts
 * mass c0 at the origin and spreads 1 - c0 evenly over the remaining points
 * of the L1 ball |dx| + |dy| <= R; `center-weighted:1:0.5` is
 * w = 1/2 delta_0 + 1/8 (4-neighborhood). Without c0 the center gets four
 * times the weight of every other point, c0 = 4 / (|ball| + 3), which is
 * 0.5 at R = 1 and 1/11 at R = 4.
 */
struct WindowSpec {
  enum class Kind { delta, box, center_weighted };

  static constexpr double default_center_weight(int radius) {
    return 4.0 / (2.0 * radius * (radius + 1) + 4.0);
  }

  Kind kind = Kind::delta;
  int radius = 0;
  double center_weight = 0.5;

  [[nodiscard]] std::string to_string() const {
    switch (kind) {
      case Kind::delta:
        return "delta";
      case Kind::box:
        return "box:" + std::to_string(radius);
      case Kind::center_weighted: {
        char buf[64];
        const auto r = std::to_chars(buf, buf + sizeof buf, center_weight);
        return "center-weighted:" + std::to_string(radius) + ":" + std::string(buf, r.ptr);
      }
    }
    return "delta";
  }

  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

namespace detail {

inline int parse_radius(std::string_view text, std::string_view spec) {
  int value = -1;
  const auto r = std::from_chars(text.data(), text.data() + text.size(), value);
  if (r.ec != std::errc{} || r.ptr != text.data() + text.size() || value < 0) {
    throw std::invalid_argument("bad window radius in '" + std::string(spec) + "'");
  }
  return value;
}

}  // namespace detail

[[nodiscard]] inline WindowSpec parse_window_spec(std::string_view spec) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto colon = spec.find(':', start);
    parts.push_back(spec.substr(start, colon == std::string_view::npos ? std::string_view::npos : colon - start));
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  WindowSpec out;
  if (parts[0] == "delta" && parts.size() == 1) {
    return out;
  }
  if (parts[0] == "box" && parts.size() == 2) {
    out.kind = WindowSpec::Kind::box;
    out.radius = detail::parse_radius(parts[1], spec);
    return out;
  }
  if (parts[0] == "center-weighted" && (parts.size() == 2 || parts.size() == 3)) {
    out.kind = WindowSpec::Kind::center_weighted;
    out.radius = detail::parse_radius(parts[1], spec);
    out.center_weight = WindowSpec::default_center_weight(out.radius);
    if (parts.size() == 3) {
      const std::string c0(parts[2]);
      char* end = nullptr;
      out.center_weight = std::strtod(c0.c_str(), &end);
      if (end != c0.c_str() + c0.size() || !(out.center_weight >= 0.0 && out.center_weight <= 1.0)) {
        throw std::invalid_argument("center weight must lie in [0, 1] in '" + std::string(spec) + "'");
      }
    }
    if (out.radius == 0 && out.center_weight != 1.0) {
      // A radius-0 ball has only the center, so c0 is forced to one.
      out.center_weight = 1.0;
    }
    return out;
  }
  throw std::invalid_argument("unknown window spec '" + std::string(spec) +
                              "' (expected delta | box:R | center-weighted:R[:c0])");
}

/// Materializes a window spec on a grid.
[[nodiscard]] inline WeightingFunction make_window(const Grid& grid, const WindowSpec& spec) {
  std::vector<WeightingFunction::Tap> taps;
  const int r = spec.radius;
  switch (spec.kind) {
    case WindowSpec::Kind::delta:
      taps.push_back({{0, 0}, 1.0});
      return WeightingFunction::from_taps(grid, taps, 0);
    case WindowSpec::Kind::box: {
      const double v = 1.0 / static_cast<double>((2 * r + 1) * (2 * r + 1));
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) taps.push_back({{dx, dy}, v});
      }
      break;
    }
    case WindowSpec::Kind::center_weighted: {
      const int ring = 2 * r * (r + 1);  // points with 0 < |dx| + |dy| <= r
      const double v = ring > 0 ? (1.0 - spec.center_weight) / ring : 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const int l1 = std::abs(dx) + std::abs(dy);
          if (l1 == 0) {
            taps.push_back({{0, 0}, ring > 0 ? spec.center_weight : 1.0});
          } else if (l1 <= r && v > 0.0) {
            taps.push_back({{dx, dy}, v});
          }
        }
      }
      break;
    }
  }
  if (2 * r + 1 > grid.width() || 2 * r + 1 > grid.height()) {
    // Too wide to read offsets unambiguously; keep the cyclic wrap semantics.
    return WeightingFunction::from_taps(grid, taps, std::nullopt);
  }
  return WeightingFunction::from_taps(grid, taps, r);
}

[[nodiscard]] inline WeightingFunction make_window(const Grid& grid, std::string_view spec) {
  return make_window(grid, parse_window_spec(spec));
}

}  // namespace histocube

#endif  // HISTOCUBE_WINDOW_HPP
