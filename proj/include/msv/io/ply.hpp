#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "msv/errors.hpp"
#include "msv/fusion.hpp"

namespace msv::io {

enum class PlyFormat { ascii, binary_little_endian };

inline PlyFormat parse_ply_format(const std::string& s) {
  if (s == "ascii") return PlyFormat::ascii;
  if (s == "binary" || s == "binary_little_endian") return PlyFormat::binary_little_endian;
  throw InvalidArgument("unknown PLY format '" + s + "'");
}

/// Vertex record, 19 bytes in binary form:
///   float x, y, z (metres) | uchar red, green, blue | ushort thermal, uv
inline void write_ply(std::ostream& out, const MultispectralPointCloud& cloud, PlyFormat format) {
  static_assert(std::endian::native == std::endian::little, "binary PLY writer assumes a little-endian host");
  out << "ply\nformat " << (format == PlyFormat::ascii ? "ascii" : "binary_little_endian") << " 1.0\n"
      << "element vertex " << cloud.size() << '\n'
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "property ushort thermal\nproperty ushort uv\n"
      << "end_header\n";
  if (format == PlyFormat::ascii) {
    out << std::setprecision(9);
    for (const auto& p : cloud.points) {
      out << static_cast<float>(p.position.x()) << ' ' << static_cast<float>(p.position.y()) << ' '
          << static_cast<float>(p.position.z()) << ' ' << int{p.color[0]} << ' ' << int{p.color[1]} << ' '
          << int{p.color[2]} << ' ' << p.thermal << ' ' << p.uv << '\n';
    }
    return;
  }
  char rec[19];
  for (const auto& p : cloud.points) {
    const float xyz[3] = {static_cast<float>(p.position.x()), static_cast<float>(p.position.y()),
                          static_cast<float>(p.position.z())};
    std::memcpy(rec, xyz, 12);
    std::memcpy(rec + 12, p.color.data(), 3);
    std::memcpy(rec + 15, &p.thermal, 2);
    std::memcpy(rec + 17, &p.uv, 2);
    out.write(rec, sizeof rec);
  }
}

inline void write_ply(const std::filesystem::path& path, const MultispectralPointCloud& cloud, PlyFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string());
  write_ply(out, cloud, format);
  if (!out) throw IoError("write failed for " + path.string());
}

/// Reads back clouds in exactly the layout write_ply produces; source pixels are not stored.
inline MultispectralPointCloud read_ply(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "ply") throw IoError("missing PLY magic");
  PlyFormat format = PlyFormat::ascii;
  std::size_t count = 0;
  std::string props;
  while (std::getline(in, line) && line != "end_header") {
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "format") {
      std::string f;
      ss >> f;
      format = parse_ply_format(f);
    } else if (key == "element") {
      std::string name;
      ss >> name >> count;
      if (name != "vertex") throw IoError("unexpected PLY element " + name);
    } else if (key == "property") {
      std::string type, name;
      ss >> type >> name;
      props += type + ' ' + name + ';';
    }
  }
  if (line != "end_header") throw IoError("truncated PLY header");
  if (props != "float x;float y;float z;uchar red;uchar green;uchar blue;ushort thermal;ushort uv;") {
    throw IoError("unsupported PLY vertex layout");
  }
  MultispectralPointCloud cloud;
  cloud.points.resize(count);
  for (auto& p : cloud.points) {
    if (format == PlyFormat::ascii) {
      float x, y, z;
      int r, g, b;
      in >> x >> y >> z >> r >> g >> b >> p.thermal >> p.uv;
      p.position = {x, y, z};
      p.color = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
    } else {
      char rec[19];
      in.read(rec, sizeof rec);
      float xyz[3];
      std::memcpy(xyz, rec, 12);
      std::memcpy(p.color.data(), rec + 12, 3);
      std::memcpy(&p.thermal, rec + 15, 2);
      std::memcpy(&p.uv, rec + 17, 2);
      p.position = {xyz[0], xyz[1], xyz[2]};
    }
    if (!in) throw IoError("truncated PLY body");
  }
  return cloud;
}

inline MultispectralPointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_ply(in);
}

}  // namespace msv::io
