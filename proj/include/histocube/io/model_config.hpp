#ifndef HISTOCUBE_IO_MODEL_CONFIG_HPP
#define HISTOCUBE_IO_MODEL_CONFIG_HPP

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "histocube/io/file.hpp"
#include "histocube/io/pnm.hpp"
#include "histocube/model.hpp"
#include "histocube/texture_models.hpp"

/**
 * \file
 * \brief YAML description of occlusion models and the sources they occlude.
 *
 * The grammar is documented in docs/formats.md. Parsing is strict: unknown
 * keys, missing keys and invalid models are reported with a line and column.
 */

namespace histocube::io {

/// A config that does not describe a valid model.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& message, int line, int column)
      : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message),
        line_{line},
        column_{column} {}

  [[nodiscard]] int line() const noexcept { return line_; }
  [[nodiscard]] int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

/// One source image: a constant color with optional noise, or a file.
struct SourceSpec {
  std::vector<std::uint32_t> color;  ///< one 8-bit component (gray) or three (RGB)
  double noise = 0.0;
  std::string image;

  friend bool operator==(const SourceSpec&, const SourceSpec&) = default;
};

struct ModelConfig {
  ModelPtr model;
  std::optional<std::uint64_t> seed;
  std::vector<SourceSpec> sources;

  friend bool operator==(const ModelConfig& a, const ModelConfig& b) {
    return *a.model == *b.model && a.seed == b.seed && a.sources == b.sources;
  }
};

namespace detail {

[[noreturn]] inline void fail(const YAML::Node& n, const std::string& msg) {
  const auto m = n.Mark();
  throw ConfigError(msg, m.line + 1, m.column + 1);
}

inline void check_keys(const YAML::Node& n, std::initializer_list<const char*> allowed) {
  if (!n.IsMap()) fail(n, "expected a mapping");
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) fail(kv.first, "unknown key '" + key + "'");
  }
}

inline YAML::Node need(const YAML::Node& n, const char* key) {
  const YAML::Node v = n[key];
  if (!v) fail(n, std::string("missing key '") + key + "'");
  return v;
}

template <typename T>
T scalar(const YAML::Node& n, const char* what) {
  if (!n.IsScalar()) fail(n, std::string("expected a scalar for ") + what);
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    fail(n, std::string("bad value for ") + what + ": '" + n.Scalar() + "'");
  }
}

template <typename T>
std::vector<T> scalar_list(const YAML::Node& n, const char* what) {
  if (!n.IsSequence()) fail(n, std::string("expected a list for ") + what);
  std::vector<T> out;
  for (const auto& e : n) out.push_back(scalar<T>(e, what));
  return out;
}

inline LabelMap parse_map(const YAML::Node& n, const Grid& g, int labels) {
  const auto v = scalar_list<int>(n, "label map");
  if (v.size() != g.size()) {
    fail(n, "label map has " + std::to_string(v.size()) + " entries, grid has " + std::to_string(g.size()));
  }
  try {
    return LabelMap{g, labels, v};
  } catch (const std::invalid_argument& e) {
    fail(n, e.what());
  }
}

inline std::vector<WeightedMap> parse_weighted_maps(const YAML::Node& n, const Grid& g, int labels) {
  if (!n.IsSequence()) fail(n, "expected a list of {p, map} entries");
  std::vector<WeightedMap> out;
  for (const auto& e : n) {
    check_keys(e, {"p", "map"});
    out.push_back({parse_map(need(e, "map"), g, labels), scalar<double>(need(e, "p"), "p")});
  }
  return out;
}

inline BlobDistribution parse_blobs(const YAML::Node& n) {
  if (n.IsScalar()) {
    if (n.Scalar() == "point") return BlobDistribution::point();
    fail(n, "blobs must be 'point', {disks: ...} or {table: ...}");
  }
  check_keys(n, {"disks", "table"});
  if (n["disks"] && n["table"]) fail(n, "give either disks or table, not both");
  if (const auto d = n["disks"]) {
    if (!d.IsSequence()) fail(d, "expected a list of {radius, p}");
    std::vector<BlobDistribution::Disk> disks;
    for (const auto& e : d) {
      check_keys(e, {"radius", "p"});
      disks.push_back({scalar<int>(need(e, "radius"), "radius"), scalar<double>(need(e, "p"), "p")});
    }
    try {
      return BlobDistribution::disks(std::move(disks));
    } catch (const std::invalid_argument& e) {
      fail(d, e.what());
    }
  }
  const auto t = need(n, "table");
  if (!t.IsSequence()) fail(t, "expected a list of {offsets, p}");
  std::vector<BlobDistribution::Blob> blobs;
  for (const auto& e : t) {
    check_keys(e, {"offsets", "p"});
    const auto offs = need(e, "offsets");
    if (!offs.IsSequence()) fail(offs, "expected a list of [dx, dy] pairs");
    std::vector<Point> pts;
    for (const auto& o : offs) {
      const auto xy = scalar_list<int>(o, "offset");
      if (xy.size() != 2) fail(o, "offsets are [dx, dy] pairs");
      pts.push_back({xy[0], xy[1]});
    }
    blobs.push_back({std::move(pts), scalar<double>(need(e, "p"), "p")});
  }
  try {
    return BlobDistribution::table(std::move(blobs));
  } catch (const std::invalid_argument& e) {
    fail(t, e.what());
  }
}

inline ModelPtr parse_model(const YAML::Node& n, const Grid& g) {
  if (!n.IsMap()) fail(n, "expected a model mapping with a 'kind' key");
  const auto kind = scalar<std::string>(need(n, "kind"), "kind");
  try {
    if (kind == "iid_spinner") {
      check_keys(n, {"kind", "probs"});
      return make_iid_spinner(g, scalar_list<double>(need(n, "probs"), "probs"));
    }
    if (kind == "coin") {
      check_keys(n, {"kind", "rho"});
      return make_coin(g, scalar<double>(need(n, "rho"), "rho"));
    }
    if (kind == "constant") {
      check_keys(n, {"kind", "labels", "label"});
      return make_constant(g, scalar<int>(need(n, "labels"), "labels"), scalar<int>(need(n, "label"), "label"));
    }
    if (kind == "pixel_spinner") {
      check_keys(n, {"kind", "labels", "probs"});
      const auto rows = need(n, "probs");
      if (!rows.IsSequence()) fail(rows, "expected one probability list per pixel");
      std::vector<std::vector<double>> probs;
      for (const auto& r : rows) probs.push_back(scalar_list<double>(r, "probs"));
      return make_pixel_spinner(g, scalar<int>(need(n, "labels"), "labels"), std::move(probs));
    }
    if (kind == "table" || kind == "class_table") {
      const char* list = kind == "table" ? "entries" : "classes";
      check_keys(n, {"kind", "labels", list});
      const int labels = scalar<int>(need(n, "labels"), "labels");
      auto maps = parse_weighted_maps(need(n, list), g, labels);
      return kind == "table" ? make_table(g, labels, std::move(maps)) : make_class_table(g, labels, std::move(maps));
    }
    if (kind == "expansion") {
      check_keys(n, {"kind", "centers", "blobs"});
      return make_expansion(parse_model(need(n, "centers"), g), parse_blobs(need(n, "blobs")));
    }
    if (kind == "overlay") {
      check_keys(n, {"kind", "top", "bottom", "mask"});
      return make_overlay(parse_model(need(n, "top"), g), parse_model(need(n, "bottom"), g),
                          parse_model(need(n, "mask"), g));
    }
  } catch (const std::invalid_argument& e) {
    fail(n, e.what());
  } catch (const std::out_of_range& e) {
    fail(n, e.what());
  }
  fail(n["kind"], "unknown model kind '" + kind + "'");
}

inline SourceSpec parse_source(const YAML::Node& n) {
  check_keys(n, {"color", "gray", "noise", "image"});
  SourceSpec s;
  const int picks = (n["color"] ? 1 : 0) + (n["gray"] ? 1 : 0) + (n["image"] ? 1 : 0);
  if (picks != 1) fail(n, "a source needs exactly one of color, gray or image");
  if (n["image"]) {
    if (n["noise"]) fail(n, "noise applies to constant sources only");
    s.image = scalar<std::string>(n["image"], "image");
    return s;
  }
  if (n["color"]) {
    s.color = scalar_list<std::uint32_t>(n["color"], "color");
    if (s.color.size() != 3) fail(n["color"], "color is [r, g, b]");
  } else {
    s.color = {scalar<std::uint32_t>(n["gray"], "gray")};
  }
  for (const auto c : s.color) {
    if (c > 255) fail(n, "color components are 0..255");
  }
  if (n["noise"]) s.noise = scalar<double>(n["noise"], "noise");
  if (!(s.noise >= 0.0)) fail(n["noise"], "noise must be nonnegative");
  return s;
}

// Shortest decimal that reads back to the same double.
inline std::string exact_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

inline void emit_map(YAML::Emitter& out, const LabelMap& m) {
  out << YAML::Flow << YAML::BeginSeq;
  for (const int v : m.labels()) out << v;
  out << YAML::EndSeq;
}

inline void emit_weighted(YAML::Emitter& out, const std::vector<WeightedMap>& maps) {
  out << YAML::BeginSeq;
  for (const auto& e : maps) {
    out << YAML::BeginMap << YAML::Key << "p" << YAML::Value << exact_double(e.probability) << YAML::Key << "map"
        << YAML::Value;
    emit_map(out, e.map);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
}

inline void emit_probs(YAML::Emitter& out, const std::vector<double>& p) {
  out << YAML::Flow << YAML::BeginSeq;
  for (const double v : p) out << exact_double(v);
  out << YAML::EndSeq;
}

inline void emit_model(YAML::Emitter& out, const OcclusionModel& m) {
  out << YAML::BeginMap << YAML::Key << "kind" << YAML::Value << std::string(m.kind());
  std::visit(
      [&](const auto& r) {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, IidSpinner>) {
          out << YAML::Key << "probs" << YAML::Value;
          emit_probs(out, r.probs);
        } else if constexpr (std::is_same_v<T, PixelSpinner>) {
          out << YAML::Key << "labels" << YAML::Value << r.num_labels << YAML::Key << "probs" << YAML::Value
              << YAML::BeginSeq;
          for (const auto& p : r.probs) emit_probs(out, p);
          out << YAML::EndSeq;
        } else if constexpr (std::is_same_v<T, TableModel>) {
          out << YAML::Key << "labels" << YAML::Value << r.num_labels << YAML::Key << "entries" << YAML::Value;
          emit_weighted(out, r.entries);
        } else if constexpr (std::is_same_v<T, ClassTable>) {
          out << YAML::Key << "labels" << YAML::Value << r.num_labels << YAML::Key << "classes" << YAML::Value;
          emit_weighted(out, r.classes);
        } else if constexpr (std::is_same_v<T, ExpansionModel>) {
          out << YAML::Key << "centers" << YAML::Value;
          emit_model(out, *r.seed);
          out << YAML::Key << "blobs" << YAML::Value << YAML::BeginMap;
          if (r.blobs.is_disks()) {
            out << YAML::Key << "disks" << YAML::Value << YAML::BeginSeq;
            for (const auto& d : r.blobs.disk_table()) {
              out << YAML::Flow << YAML::BeginMap << YAML::Key << "radius" << YAML::Value << d.radius << YAML::Key
                  << "p" << YAML::Value << exact_double(d.probability) << YAML::EndMap;
            }
          } else {
            out << YAML::Key << "table" << YAML::Value << YAML::BeginSeq;
            for (const auto& b : r.blobs.blob_table()) {
              out << YAML::BeginMap << YAML::Key << "offsets" << YAML::Value << YAML::Flow << YAML::BeginSeq;
              for (const Point o : b.offsets) out << YAML::Flow << YAML::BeginSeq << o.x << o.y << YAML::EndSeq;
              out << YAML::EndSeq << YAML::Key << "p" << YAML::Value << exact_double(b.probability) << YAML::EndMap;
            }
          }
          out << YAML::EndSeq << YAML::EndMap;
        } else {
          out << YAML::Key << "top" << YAML::Value;
          emit_model(out, *r.top);
          out << YAML::Key << "bottom" << YAML::Value;
          emit_model(out, *r.bottom);
          out << YAML::Key << "mask" << YAML::Value;
          emit_model(out, *r.mask);
        }
      },
      m.representation());
  out << YAML::EndMap;
}

}  // namespace detail

/// Parses a config document. Root keys: grid, model, and optional seed and sources.
[[nodiscard]] inline ModelConfig parse_model_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.msg, e.mark.line + 1, e.mark.column + 1);
  }
  if (!root || root.IsNull()) throw ConfigError("empty config", 1, 1);
  detail::check_keys(root, {"grid", "seed", "model", "sources"});
  const auto dims = detail::scalar_list<int>(detail::need(root, "grid"), "grid");
  if (dims.size() != 2 || dims[0] <= 0 || dims[1] <= 0) detail::fail(root["grid"], "grid is [width, height]");
  const Grid g{dims[0], dims[1]};
  ModelConfig cfg;
  cfg.model = detail::parse_model(detail::need(root, "model"), g);
  if (root["seed"]) cfg.seed = detail::scalar<std::uint64_t>(root["seed"], "seed");
  if (const auto s = root["sources"]) {
    if (!s.IsSequence()) detail::fail(s, "sources is a list");
    for (const auto& e : s) cfg.sources.push_back(detail::parse_source(e));
    if (cfg.sources.size() != static_cast<std::size_t>(cfg.model->num_labels())) {
      detail::fail(s, "model has " + std::to_string(cfg.model->num_labels()) + " labels but " +
                          std::to_string(cfg.sources.size()) + " sources are listed");
    }
  }
  return cfg;
}

[[nodiscard]] inline ModelConfig read_model_config(const std::filesystem::path& path) {
  try {
    return parse_model_config(read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what(), e.line(), e.column());
  }
}

/// Canonical text of a config; parsing it gives back an equal config.
[[nodiscard]] inline std::string serialize_model_config(const ModelConfig& cfg) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "grid" << YAML::Value << YAML::Flow << YAML::BeginSeq << cfg.model->grid().width()
      << cfg.model->grid().height() << YAML::EndSeq;
  if (cfg.seed) out << YAML::Key << "seed" << YAML::Value << *cfg.seed;
  out << YAML::Key << "model" << YAML::Value;
  detail::emit_model(out, *cfg.model);
  if (!cfg.sources.empty()) {
    out << YAML::Key << "sources" << YAML::Value << YAML::BeginSeq;
    for (const auto& s : cfg.sources) {
      out << YAML::Flow << YAML::BeginMap;
      if (!s.image.empty()) {
        out << YAML::Key << "image" << YAML::Value << s.image;
      } else if (s.color.size() == 3) {
        out << YAML::Key << "color" << YAML::Value << YAML::Flow << YAML::BeginSeq << s.color[0] << s.color[1]
            << s.color[2] << YAML::EndSeq;
      } else {
        out << YAML::Key << "gray" << YAML::Value << s.color.at(0);
      }
      if (s.image.empty() && s.noise != 0.0) out << YAML::Key << "noise" << YAML::Value << detail::exact_double(s.noise);
      out << YAML::EndMap;
    }
    out << YAML::EndSeq;
  }
  out << YAML::EndMap;
  if (!out.good()) throw std::logic_error("config emitter failed: " + out.GetLastError());
  return std::string(out.c_str()) + "\n";
}

/// Source images for a config. Constant sources are RGB (Z_256^3) or gray
/// (Z_256); source i draws its noise from derive_seed(seed, i). Image sources
/// are read relative to `base`.
[[nodiscard]] inline std::vector<Image> make_sources(const ModelConfig& cfg, std::uint64_t seed,
                                                     const std::filesystem::path& base = {}) {
  std::vector<Image> out;
  const Grid& g = cfg.model->grid();
  for (std::size_t i = 0; i < cfg.sources.size(); ++i) {
    const auto& s = cfg.sources[i];
    if (!s.image.empty()) {
      const std::filesystem::path p = base / s.image;  // an absolute s.image replaces base
      Image f = read_pnm(p);
      if (f.grid() != g) throw IoError(p.string() + ": source size does not match the model grid");
      out.push_back(std::move(f));
      continue;
    }
    const ValueSpace values = s.color.size() == 3 ? ValueSpace{{256, 256, 256}} : ValueSpace::cyclic(256);
    out.push_back(noisy_constant_image(g, values, s.color, s.noise, derive_seed(seed, i)));
  }
  if (!out.empty() && out.size() != static_cast<std::size_t>(cfg.model->num_labels())) {
    throw IoError("source count does not match model labels");
  }
  for (const auto& f : out) {
    if (f.values() != out.front().values()) throw IoError("sources must share one value space");
  }
  return out;
}

}  // namespace histocube::io

#endif  // HISTOCUBE_IO_MODEL_CONFIG_HPP
