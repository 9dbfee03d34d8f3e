#ifndef HISTOCUBE_IO_CLASSIFIER_FILE_HPP
#define HISTOCUBE_IO_CLASSIFIER_FILE_HPP

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "histocube/classifier.hpp"
#include "histocube/io/file.hpp"

/**
 * \file
 * \brief Text artifact for a trained classifier. Doubles are written as C
 * hexfloats, so every vector reads back bit for bit.
 *
 *     histocube-classifier 1
 *     value_count 64
 *     window center-weighted:4:0.5
 *     mode noncyclic
 *     quantize 8,drop,8
 *     names Ca Co Ps
 *     classes 3
 *     class 0 requested 2 directions 2
 *     mean <|Y| hexfloats>
 *     sigma <one per direction>
 *     u <|Y| hexfloats>          (once per direction)
 */

namespace histocube::io {

/// A classifier plus the preprocessing it was trained with.
struct ClassifierArtifact {
  SubspaceClassifier classifier;
  std::string window;    ///< window spec string
  std::string mode;      ///< filter mode name
  std::string quantize;  ///< quantization spec, empty for none
  std::vector<std::string> names;

  bool operator==(const ClassifierArtifact&) const = default;
};

namespace detail {

inline void put_doubles(std::ostringstream& os, const char* tag, const std::vector<double>& v) {
  os << tag;
  for (const double d : v) os << ' ' << std::hexfloat << d << std::defaultfloat;
  os << '\n';
}

inline std::vector<double> get_doubles(std::istream& in, const char* tag, std::size_t n) {
  std::string line;
  if (!std::getline(in, line)) throw IoError(std::string("classifier file: missing '") + tag + "' line");
  std::istringstream ls(line);
  std::string word;
  if (!(ls >> word) || word != tag) throw IoError(std::string("classifier file: expected '") + tag + "'");
  std::vector<double> out;
  while (ls >> word) {
    char* end = nullptr;
    const double v = std::strtod(word.c_str(), &end);
    if (end != word.c_str() + word.size()) throw IoError("classifier file: bad number '" + word + "'");
    out.push_back(v);
  }
  if (out.size() != n) {
    throw IoError(std::string("classifier file: '") + tag + "' has " + std::to_string(out.size()) + " values, expected " +
                  std::to_string(n));
  }
  return out;
}

inline std::string get_field(std::istream& in, const char* key) {
  std::string line;
  if (!std::getline(in, line)) throw IoError(std::string("classifier file: missing '") + key + "'");
  const std::string prefix = std::string(key);
  if (line.compare(0, prefix.size(), prefix) != 0 || (line.size() > prefix.size() && line[prefix.size()] != ' ')) {
    throw IoError(std::string("classifier file: expected '") + key + "', got '" + line + "'");
  }
  return line.size() > prefix.size() ? line.substr(prefix.size() + 1) : std::string{};
}

inline std::size_t to_count(const std::string& s, const char* what) {
  std::size_t pos = 0;
  unsigned long v = 0;
  try {
    v = std::stoul(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) throw IoError(std::string("classifier file: bad ") + what + " '" + s + "'");
  return v;
}

}  // namespace detail

[[nodiscard]] inline std::string encode_classifier(const ClassifierArtifact& a) {
  const auto& clf = a.classifier;
  clf.validate();
  std::ostringstream os;
  os << "histocube-classifier 1\n";
  os << "value_count " << clf.value_count << '\n';
  os << "window " << a.window << '\n';
  os << "mode " << a.mode << '\n';
  os << "quantize " << a.quantize << '\n';
  os << "names";
  for (const auto& n : a.names) os << ' ' << n;
  os << '\n';
  os << "classes " << clf.num_classes() << '\n';
  for (std::size_t k = 0; k < clf.num_classes(); ++k) {
    const auto& c = clf.classes[k];
    os << "class " << k << " requested " << c.requested << " directions " << c.directions.size() << '\n';
    detail::put_doubles(os, "mean", c.mean);
    detail::put_doubles(os, "sigma", c.singular_values);
    for (const auto& u : c.directions) detail::put_doubles(os, "u", u);
  }
  return os.str();
}

[[nodiscard]] inline ClassifierArtifact decode_classifier(const std::string& text) {
  std::istringstream in(text);
  if (detail::get_field(in, "histocube-classifier") != "1") throw IoError("classifier file: unsupported version");
  ClassifierArtifact a;
  a.classifier.value_count = detail::to_count(detail::get_field(in, "value_count"), "value_count");
  a.window = detail::get_field(in, "window");
  a.mode = detail::get_field(in, "mode");
  a.quantize = detail::get_field(in, "quantize");
  std::istringstream names(detail::get_field(in, "names"));
  for (std::string n; names >> n;) a.names.push_back(n);
  const std::size_t k_count = detail::to_count(detail::get_field(in, "classes"), "class count");
  for (std::size_t k = 0; k < k_count; ++k) {
    std::istringstream head(detail::get_field(in, "class"));
    std::size_t idx = 0;
    std::size_t requested = 0;
    std::size_t nd = 0;
    std::string w1, w2;
    if (!(head >> idx >> w1 >> requested >> w2 >> nd) || idx != k || w1 != "requested" || w2 != "directions") {
      throw IoError("classifier file: malformed header for class " + std::to_string(k));
    }
    ClassSubspace c;
    c.requested = requested;
    c.mean = detail::get_doubles(in, "mean", a.classifier.value_count);
    c.singular_values = detail::get_doubles(in, "sigma", nd);
    for (std::size_t n = 0; n < nd; ++n) c.directions.push_back(detail::get_doubles(in, "u", a.classifier.value_count));
    a.classifier.classes.push_back(std::move(c));
  }
  a.classifier.validate();
  return a;
}

inline void write_classifier(const std::filesystem::path& path, const ClassifierArtifact& a) {
  write_file_atomic(path, encode_classifier(a));
}

[[nodiscard]] inline ClassifierArtifact read_classifier(const std::filesystem::path& path) {
  return decode_classifier(read_file(path));
}

}  // namespace histocube::io

#endif  // HISTOCUBE_IO_CLASSIFIER_FILE_HPP
