#ifndef HISTOCUBE_IO_PNM_HPP
#define HISTOCUBE_IO_PNM_HPP

#include <array>
#include <cctype>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "histocube/grid.hpp"
#include "histocube/io/file.hpp"

/**
 * \file
 * \brief Binary PGM (P5) and PPM (P6) images with 8-bit samples, and label
 * maps stored as P5 plus a palette sidecar.
 *
 * A P5 file with maxval m decodes to values in Z_{m+1}; a P6 file decodes to
 * Z_{m+1}^3 with red most significant.
 */

namespace histocube::io {

namespace detail {

struct PnmHeader {
  char kind = '5';
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::size_t data_offset = 0;
};

inline PnmHeader parse_pnm_header(const std::string& data, const std::string& name) {
  if (data.size() < 2 || data[0] != 'P') throw IoError(name + ": not a PNM file");
  if (data[1] != '5' && data[1] != '6') {
    throw IoError(name + ": unsupported image format P" + std::string(1, data[1]) + " (need binary P5 or P6)");
  }
  PnmHeader h;
  h.kind = data[1];
  std::size_t pos = 2;
  auto next_int = [&](const char* what) {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= data.size() || !std::isdigit(static_cast<unsigned char>(data[pos]))) {
      throw IoError(name + ": malformed header, expected " + what);
    }
    long v = 0;
    while (pos < data.size() && std::isdigit(static_cast<unsigned char>(data[pos]))) {
      v = v * 10 + (data[pos++] - '0');
      if (v > 1'000'000'000) throw IoError(name + ": header value too large");
    }
    return static_cast<int>(v);
  };
  h.width = next_int("width");
  h.height = next_int("height");
  h.maxval = next_int("maxval");
  if (pos >= data.size() || !std::isspace(static_cast<unsigned char>(data[pos]))) {
    throw IoError(name + ": malformed header after maxval");
  }
  h.data_offset = pos + 1;
  if (h.width <= 0 || h.height <= 0) throw IoError(name + ": image dimensions must be positive");
  if (h.maxval <= 0 || h.maxval > 255) {
    throw IoError(name + ": unsupported pixel depth (maxval " + std::to_string(h.maxval) + ", need 1..255)");
  }
  return h;
}

inline std::string pnm_header(char kind, const Grid& g, int maxval) {
  std::ostringstream os;
  os << 'P' << kind << '\n' << g.width() << ' ' << g.height() << '\n' << maxval << '\n';
  return os.str();
}

}  // namespace detail

[[nodiscard]] inline Image decode_pnm(const std::string& data, const std::string& name = "image") {
  const auto h = detail::parse_pnm_header(data, name);
  const Grid g{h.width, h.height};
  const std::size_t channels = h.kind == '6' ? 3 : 1;
  const std::size_t need = g.size() * channels;
  if (data.size() - h.data_offset < need) throw IoError(name + ": truncated pixel data");
  const auto levels = static_cast<std::uint32_t>(h.maxval + 1);
  std::vector<std::uint32_t> px(g.size());
  const auto* p = reinterpret_cast<const unsigned char*>(data.data() + h.data_offset);
  for (std::size_t i = 0; i < g.size(); ++i) {
    std::uint32_t v = 0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint32_t s = p[i * channels + c];
      if (s > static_cast<std::uint32_t>(h.maxval)) throw IoError(name + ": sample exceeds maxval");
      v = v * levels + s;
    }
    px[i] = v;
  }
  return Image{g, channels == 3 ? ValueSpace{{levels, levels, levels}} : ValueSpace::cyclic(levels), std::move(px)};
}

[[nodiscard]] inline Image read_pnm(const std::filesystem::path& path) { return decode_pnm(read_file(path), path.string()); }

/// P5 for a single factor of size <= 256, P6 for three equal factors of size <= 256.
[[nodiscard]] inline std::string encode_pnm(const Image& f) {
  const auto& fs = f.values().factors();
  const bool gray = fs.size() == 1 && fs[0] >= 2 && fs[0] <= 256;
  const bool color = fs.size() == 3 && fs[0] == fs[1] && fs[1] == fs[2] && fs[0] >= 2 && fs[0] <= 256;
  if (!gray && !color) throw IoError("value space cannot be stored as 8-bit PGM or PPM");
  std::string out = detail::pnm_header(gray ? '5' : '6', f.grid(), static_cast<int>(fs[0]) - 1);
  for (const auto v : f.pixels()) {
    if (gray) {
      out.push_back(static_cast<char>(v));
    } else {
      const auto d = f.values().decompose(v);
      for (const auto c : d) out.push_back(static_cast<char>(c));
    }
  }
  return out;
}

inline void write_pnm(const std::filesystem::path& path, const Image& f) { write_file_atomic(path, encode_pnm(f)); }

/// Display colors and optional names for labels.
struct Palette {
  struct Entry {
    std::array<int, 3> rgb{};
    std::string name;
  };
  std::vector<Entry> entries;

  /// Evenly spaced gray levels.
  static Palette gray(int num_labels) {
    Palette p;
    for (int k = 0; k < num_labels; ++k) {
      const int v = num_labels == 1 ? 0 : k * 255 / (num_labels - 1);
      p.entries.push_back({{v, v, v}, {}});
    }
    return p;
  }
};

[[nodiscard]] inline std::filesystem::path palette_path(const std::filesystem::path& labels) {
  return labels.string() + ".palette";
}

[[nodiscard]] inline std::string encode_palette(const Palette& p) {
  std::ostringstream os;
  os << "labels " << p.entries.size() << '\n';
  for (std::size_t k = 0; k < p.entries.size(); ++k) {
    const auto& e = p.entries[k];
    os << k << ' ' << e.rgb[0] << ' ' << e.rgb[1] << ' ' << e.rgb[2];
    if (!e.name.empty()) os << ' ' << e.name;
    os << '\n';
  }
  return os.str();
}

[[nodiscard]] inline Palette decode_palette(const std::string& text, const std::string& name = "palette") {
  std::istringstream in(text);
  std::string word;
  std::size_t n = 0;
  if (!(in >> word >> n) || word != "labels" || n == 0 || n > 256) throw IoError(name + ": expected 'labels <count>'");
  Palette p;
  std::string line;
  std::getline(in, line);
  for (std::size_t k = 0; k < n; ++k) {
    if (!std::getline(in, line)) throw IoError(name + ": missing entry for label " + std::to_string(k));
    std::istringstream ls(line);
    std::size_t idx = 0;
    Palette::Entry e;
    if (!(ls >> idx >> e.rgb[0] >> e.rgb[1] >> e.rgb[2]) || idx != k) {
      throw IoError(name + ": malformed entry for label " + std::to_string(k));
    }
    ls >> e.name;
    p.entries.push_back(e);
  }
  return p;
}

/// Writes labels as one byte per pixel (P5, maxval 255) and the palette sidecar.
inline void write_label_map(const std::filesystem::path& path, const LabelMap& labels, Palette palette = {}) {
  if (labels.num_labels() > 256) throw IoError("label maps are limited to 256 labels");
  if (palette.entries.empty()) palette = Palette::gray(labels.num_labels());
  if (palette.entries.size() != static_cast<std::size_t>(labels.num_labels())) {
    throw IoError("palette size does not match label count");
  }
  std::string out = detail::pnm_header('5', labels.grid(), 255);
  for (const int v : labels.labels()) out.push_back(static_cast<char>(v));
  write_file_atomic(path, out);
  write_file_atomic(palette_path(path), encode_palette(palette));
}

struct LabelFile {
  LabelMap labels;
  Palette palette;
};

/// Reads a P5 label map; the label count comes from the sidecar when present.
[[nodiscard]] inline LabelFile read_label_map(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  const auto h = detail::parse_pnm_header(data, path.string());
  if (h.kind != '5') throw IoError(path.string() + ": label maps must be P5");
  const Grid g{h.width, h.height};
  if (data.size() - h.data_offset < g.size()) throw IoError(path.string() + ": truncated pixel data");
  std::vector<int> labels(g.size());
  int top = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    labels[i] = static_cast<unsigned char>(data[h.data_offset + i]);
    top = std::max(top, labels[i]);
  }
  Palette palette;
  const auto side = palette_path(path);
  if (std::filesystem::exists(side)) {
    palette = decode_palette(read_file(side), side.string());
  } else {
    palette = Palette::gray(top + 1);
  }
  const int n = static_cast<int>(palette.entries.size());
  if (top >= n) throw IoError(path.string() + ": label " + std::to_string(top) + " exceeds palette size");
  return {LabelMap{g, n, std::move(labels)}, std::move(palette)};
}

/// Label map rendered in palette colors, for viewing.
[[nodiscard]] inline Image render_labels(const LabelMap& labels, const Palette& palette) {
  const ValueSpace rgb{{256, 256, 256}};
  std::vector<std::uint32_t> px(labels.grid().size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    const auto& c = palette.entries.at(static_cast<std::size_t>(labels[i])).rgb;
    const std::array<std::uint32_t, 3> d{static_cast<std::uint32_t>(c[0]), static_cast<std::uint32_t>(c[1]),
                                         static_cast<std::uint32_t>(c[2])};
    px[i] = rgb.compose(d);
  }
  return Image{labels.grid(), rgb, std::move(px)};
}

}  // namespace histocube::io

#endif  // HISTOCUBE_IO_PNM_HPP
