#ifndef HISTOCUBE_IO_CUBE_FILE_HPP
#define HISTOCUBE_IO_CUBE_FILE_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "histocube/grid.hpp"
#include "histocube/io/file.hpp"
#include "histocube/io/pnm.hpp"

/**
 * \file
 * \brief Binary histogram cube files.
 *
 * Layout: the 8 bytes "HISTCUBE", then little-endian u32 version (1), width,
 * height and |Y|, then |Y| * height * width little-endian IEEE-754 doubles,
 * level-major and row-major within a level.
 */

namespace histocube::io {

inline constexpr char kCubeMagic[8] = {'H', 'I', 'S', 'T', 'C', 'U', 'B', 'E'};
inline constexpr std::uint32_t kCubeVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_le(const std::string& data, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(data[pos + static_cast<std::size_t>(i)]);
  return v;
}

}  // namespace detail

[[nodiscard]] inline std::string encode_cube(const HistCube& cube) {
  std::string out(kCubeMagic, kCubeMagic + 8);
  detail::put_u32(out, kCubeVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(cube.grid().width()));
  detail::put_u32(out, static_cast<std::uint32_t>(cube.grid().height()));
  detail::put_u32(out, static_cast<std::uint32_t>(cube.values().size()));
  out.reserve(out.size() + 8 * cube.data().size());
  for (const double v : cube.data()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

/// Decodes a cube; the value space comes back as the single factor Z_|Y|.
[[nodiscard]] inline HistCube decode_cube(const std::string& data, const std::string& name = "cube") {
  if (data.size() < 24 || std::memcmp(data.data(), kCubeMagic, 8) != 0) throw IoError(name + ": not a cube file");
  const auto version = detail::get_le(data, 8, 4);
  if (version != kCubeVersion) throw IoError(name + ": unsupported cube version " + std::to_string(version));
  const auto w = detail::get_le(data, 12, 4);
  const auto h = detail::get_le(data, 16, 4);
  const auto ny = detail::get_le(data, 20, 4);
  if (w == 0 || h == 0 || ny == 0) throw IoError(name + ": empty cube dimensions");
  if ((data.size() - 24) / 8 != w * h * ny || (data.size() - 24) % 8 != 0) {
    throw IoError(name + ": payload size does not match dimensions");
  }
  HistCube cube{Grid{static_cast<int>(w), static_cast<int>(h)}, ValueSpace::cyclic(static_cast<std::uint32_t>(ny))};
  auto out = cube.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<double>(detail::get_le(data, 24 + 8 * i, 8));
  return cube;
}

inline void write_cube(const std::filesystem::path& path, const HistCube& cube) {
  write_file_atomic(path, encode_cube(cube));
}

[[nodiscard]] inline HistCube read_cube(const std::filesystem::path& path) {
  return decode_cube(read_file(path), path.string());
}

/// One 8-bit PGM per level, level_000.pgm onward, scaled so 1 maps to 255.
inline std::vector<std::filesystem::path> write_level_stack(const std::filesystem::path& dir, const HistCube& cube) {
  std::vector<std::filesystem::path> written;
  const std::size_t ny = cube.values().size();
  const int digits = std::max<int>(3, static_cast<int>(std::to_string(ny - 1).size()));
  for (std::size_t y = 0; y < ny; ++y) {
    std::vector<std::uint32_t> px;
    for (const double v : cube.level(y)) px.push_back(static_cast<std::uint32_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    std::string idx = std::to_string(y);
    idx.insert(0, static_cast<std::size_t>(digits) - idx.size(), '0');
    const auto path = dir / ("level_" + idx + ".pgm");
    write_pnm(path, Image{cube.grid(), ValueSpace::cyclic(256), std::move(px)});
    written.push_back(path);
  }
  return written;
}

}  // namespace histocube::io

#endif  // HISTOCUBE_IO_CUBE_FILE_HPP
