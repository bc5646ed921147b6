#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "skyshade/error.hpp"
#include "skyshade/geometry.hpp"
#include "skyshade/ply.hpp"

namespace skyshade {

/// A 3D map in the ENU frame. voxel_size records the box width of the last
/// filter pass (0 = unfiltered).
struct MapCloud {
  std::vector<Vec3> points;
  double voxel_size = 0.0;

  std::size_t size() const { return points.size(); }
};

enum class CloudFormat { Auto, PlyAscii, PlyBinary, XyzCsv };

namespace detail {

inline bool has_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  std::string tail = s.substr(s.size() - suffix.size());
  std::transform(tail.begin(), tail.end(), tail.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return tail == suffix;
}

inline MapCloud load_xyz_csv(const std::string& path, std::size_t& dropped) {
  std::ifstream in(path);
  if (!in) fail(errc::io_failure, "cannot open '" + path + "'");
  MapCloud cloud;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    for (char& c : line)
      if (c == ',' || c == ';' || c == '\t') c = ' ';
    std::istringstream ls(line);
    double v[3];
    std::string tok[3];
    if (!(ls >> tok[0] >> tok[1] >> tok[2])) {
      if (first) {
        first = false;  // header row
        continue;
      }
      fail(errc::truncated_payload, "line " + std::to_string(lineno) + ": fewer than 3 columns");
    }
    bool numeric = true;
    for (int i = 0; i < 3; ++i) {
      try {
        std::size_t pos = 0;
        v[i] = std::stod(tok[i], &pos);
        if (pos != tok[i].size()) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;  // header row like "x,y,z"
        continue;
      }
      fail(errc::truncated_payload, "line " + std::to_string(lineno) + ": non-numeric value");
    }
    first = false;
    if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || !std::isfinite(v[2])) {
      ++dropped;
      continue;
    }
    cloud.points.push_back({v[0], v[1], v[2]});
  }
  return cloud;
}

inline CloudFormat sniff_format(const std::string& path) {
  if (has_suffix(path, ".ply")) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(errc::io_failure, "cannot open '" + path + "'");
    std::string magic, fmt;
    std::getline(in, magic);
    std::getline(in, fmt);
    return fmt.find("binary") != std::string::npos ? CloudFormat::PlyBinary
                                                   : CloudFormat::PlyAscii;
  }
  if (has_suffix(path, ".xyz") || has_suffix(path, ".csv") || has_suffix(path, ".txt"))
    return CloudFormat::XyzCsv;
  fail(errc::unsupported_format, "cannot infer format of '" + path + "'");
}

}  // namespace detail

struct LoadReport {
  std::size_t dropped_non_finite = 0;
};

/// Loads a cloud from PLY (ascii / binary LE) or XYZ CSV. Non-finite rows are
/// dropped and counted in the report.
inline MapCloud load_cloud(const std::string& path, CloudFormat format = CloudFormat::Auto,
                           LoadReport* report = nullptr) {
  if (format == CloudFormat::Auto) format = detail::sniff_format(path);
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  if (format == CloudFormat::XyzCsv) return detail::load_xyz_csv(path, rep.dropped_non_finite);

  const ply::VertexTable table = ply::read(path);
  rep.dropped_non_finite = table.dropped_non_finite;
  const ply::Property* x = table.find("x");
  const ply::Property* y = table.find("y");
  const ply::Property* z = table.find("z");
  MapCloud cloud;
  cloud.points.resize(x->values.size());
  for (std::size_t i = 0; i < cloud.points.size(); ++i)
    cloud.points[i] = {x->values[i], y->values[i], z->values[i]};
  return cloud;
}

/// Writes bare x/y/z. PLY coordinates use float64 so that save/load
/// round-trips are bit-exact.
inline void save_cloud(const std::string& path, const MapCloud& cloud,
                       CloudFormat format = CloudFormat::Auto) {
  if (format == CloudFormat::Auto)
    format = detail::has_suffix(path, ".ply") ? CloudFormat::PlyBinary : CloudFormat::XyzCsv;
  if (format == CloudFormat::XyzCsv) {
    std::ofstream out(path);
    if (!out) fail(errc::io_failure, "cannot open '" + path + "' for writing");
    out << "x,y,z\n";
    char buf[128];
    for (const auto& p : cloud.points) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", p.x, p.y, p.z);
      out << buf;
    }
    return;
  }
  ply::VertexTable table;
  table.count = cloud.points.size();
  table.properties.resize(3);
  const char* names[3] = {"x", "y", "z"};
  for (int c = 0; c < 3; ++c) {
    table.properties[c].name = names[c];
    table.properties[c].type = ply::Scalar::Float64;
    table.properties[c].values.reserve(cloud.points.size());
  }
  for (const auto& p : cloud.points) {
    table.properties[0].values.push_back(p.x);
    table.properties[1].values.push_back(p.y);
    table.properties[2].values.push_back(p.z);
  }
  ply::write(path, table, format == CloudFormat::PlyBinary);
}

namespace detail {

struct VoxelKey {
  std::int64_t c[3];
  bool operator==(const VoxelKey& o) const {
    return c[0] == o.c[0] && c[1] == o.c[1] && c[2] == o.c[2];
  }
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = 1469598103934665603ull;
    for (int i = 0; i < 3; ++i) {
      h ^= static_cast<std::uint64_t>(k.c[i]);
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

}  // namespace detail

/// Indices of the points kept by a voxel pass over `points`: one point per
/// axis-aligned box of side d_box, boundaries at anchor + k*d_box. The kept
/// point is the one nearest the box center, ties broken by lexicographic
/// coordinate order, so the result does not depend on input order. Large
/// coordinates are shifted by a d_box multiple near the centroid before
/// binning, which leaves the partition unchanged.
inline std::vector<std::size_t> voxel_filter_indices(const std::vector<Vec3>& points,
                                                     double d_box,
                                                     const Vec3& anchor = {0, 0, 0}) {
  if (!(d_box > 0.0)) fail(errc::invalid_config, "d_box must be > 0");
  std::vector<std::size_t> kept;
  if (points.empty()) return kept;

  Vec3 centroid{0, 0, 0};
  for (const auto& p : points) centroid += p;
  const double inv_n = 1.0 / static_cast<double>(points.size());
  const Vec3 shift{anchor.x + d_box * std::round((centroid.x * inv_n - anchor.x) / d_box),
                   anchor.y + d_box * std::round((centroid.y * inv_n - anchor.y) / d_box),
                   anchor.z + d_box * std::round((centroid.z * inv_n - anchor.z) / d_box)};

  struct Best {
    std::size_t index;
    double dist2;
  };
  std::unordered_map<detail::VoxelKey, Best, detail::VoxelKeyHash> cells;
  cells.reserve(points.size());

  auto lex_less = [](const Vec3& a, const Vec3& b) {
    if (a.x != b.x) return a.x < b.x;
    if (a.y != b.y) return a.y < b.y;
    return a.z < b.z;
  };

  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 q = points[i] - shift;
    const detail::VoxelKey key{{static_cast<std::int64_t>(std::floor(q.x / d_box)),
                                static_cast<std::int64_t>(std::floor(q.y / d_box)),
                                static_cast<std::int64_t>(std::floor(q.z / d_box))}};
    const Vec3 center{(key.c[0] + 0.5) * d_box, (key.c[1] + 0.5) * d_box,
                      (key.c[2] + 0.5) * d_box};
    const double dist2 = (q - center).squared_norm();
    auto [it, inserted] = cells.try_emplace(key, Best{i, dist2});
    if (!inserted) {
      Best& b = it->second;
      if (dist2 < b.dist2 ||
          (dist2 == b.dist2 && lex_less(points[i], points[b.index]))) {
        b = Best{i, dist2};
      }
    }
  }
  kept.reserve(cells.size());
  for (const auto& [key, best] : cells) kept.push_back(best.index);
  std::sort(kept.begin(), kept.end());
  return kept;
}

/// Voxel pass over a MapCloud. Output points are in lexicographic coordinate
/// order, making the result fully independent of input order.
inline MapCloud voxel_filter(const MapCloud& cloud, double d_box, const Vec3& anchor = {0, 0, 0}) {
  MapCloud out;
  out.voxel_size = d_box;
  const auto kept = voxel_filter_indices(cloud.points, d_box, anchor);
  out.points.reserve(kept.size());
  for (std::size_t i : kept) out.points.push_back(cloud.points[i]);
  std::sort(out.points.begin(), out.points.end(), [](const Vec3& a, const Vec3& b) {
    if (a.x != b.x) return a.x < b.x;
    if (a.y != b.y) return a.y < b.y;
    return a.z < b.z;
  });
  return out;
}

}  // namespace skyshade
