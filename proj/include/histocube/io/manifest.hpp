#ifndef HISTOCUBE_IO_MANIFEST_HPP
#define HISTOCUBE_IO_MANIFEST_HPP

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include "histocube/io/file.hpp"

/**
 * \file
 * \brief JSON record written next to every CLI output.
 *
 * manifest_hash covers everything except wall time and directory names: the
 * command, parameters, seed, config hash, tool version, and the names and
 * SHA-256 of every input and output. Two runs with equal hashes wrote
 * byte-identical outputs.
 */

namespace histocube::io {

inline constexpr const char* kToolVersion = "0.1.0";

struct FileRecord {
  std::filesystem::path path;
  std::string sha256;
};

struct RunManifest {
  std::string command;
  nlohmann::ordered_json parameters = nlohmann::ordered_json::object();
  std::uint64_t seed = 0;
  std::string config_sha256;
  std::vector<FileRecord> inputs;
  std::vector<FileRecord> outputs;
  double wall_time_seconds = 0.0;

  void add_input(const std::filesystem::path& p) { inputs.push_back({p, sha256_hex(read_file(p))}); }
  void add_output(const std::filesystem::path& p) { outputs.push_back({p, sha256_hex(read_file(p))}); }

  /// Hash of the reproducible part of the record.
  [[nodiscard]] std::string hash() const {
    nlohmann::ordered_json j;
    j["tool_version"] = kToolVersion;
    j["command"] = command;
    j["parameters"] = parameters;
    j["seed"] = seed;
    j["config_sha256"] = config_sha256;
    auto files = [](const std::vector<FileRecord>& rs) {
      auto a = nlohmann::ordered_json::array();
      for (const auto& r : rs) a.push_back({{"name", r.path.filename().string()}, {"sha256", r.sha256}});
      return a;
    };
    j["inputs"] = files(inputs);
    j["outputs"] = files(outputs);
    return sha256_hex(j.dump());
  }

  [[nodiscard]] nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["tool"] = "histocube";
    j["tool_version"] = kToolVersion;
    j["command"] = command;
    j["parameters"] = parameters;
    j["seed"] = seed;
    j["config_sha256"] = config_sha256;
    auto files = [](const std::vector<FileRecord>& rs) {
      auto a = nlohmann::ordered_json::array();
      for (const auto& r : rs) a.push_back({{"path", r.path.string()}, {"sha256", r.sha256}});
      return a;
    };
    j["inputs"] = files(inputs);
    j["outputs"] = files(outputs);
    j["wall_time_seconds"] = wall_time_seconds;
    j["manifest_hash"] = hash();
    return j;
  }
};

inline void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  write_file_atomic(path, m.to_json().dump(2) + "\n");
}

/// manifest_hash field of a written manifest.
[[nodiscard]] inline std::string read_manifest_hash(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_file(path)).at("manifest_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace histocube::io

#endif  // HISTOCUBE_IO_MANIFEST_HPP
