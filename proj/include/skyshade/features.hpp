#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "skyshade/cloud.hpp"
#include "skyshade/error.hpp"
#include "skyshade/geometry.hpp"
#include "skyshade/kdtree.hpp"
#include "skyshade/ply.hpp"
#include "skyshade/threading.hpp"

namespace skyshade {

/// Eigenvalue shape scores of a local covariance, eigenvalues sorted
/// ascending: u is the unstructureness ratio, s the structureness score,
/// delta = u - s the spherical level (-1 plane, 0 edge, +1 diffuse).
struct ShapeValues {
  double u;
  double s;
  double delta;
};

/// u = l1/l3, s = (l2/l3) * (l2-l1)/sqrt(l2^2+l1^2). A perfect line
/// (l1 = l2 = 0) makes the second factor 0/0; it is defined as 0, so both
/// scores vanish there.
inline ShapeValues shape_values(double lambda1, double lambda2, double lambda3) {
  if (!(lambda3 > 0.0))
    fail(errc::degenerate_covariance, "largest eigenvalue is zero");
  const double u = lambda1 / lambda3;
  double s = 0.0;
  const double denom2 = lambda2 * lambda2 + lambda1 * lambda1;
  if (denom2 > 0.0) s = (lambda2 / lambda3) * ((lambda2 - lambda1) / std::sqrt(denom2));
  return {u, s, u - s};
}

/// Normalizes and orients a normal candidate sky-facing: n_z >= 0, with
/// n_x >= 0 then n_y >= 0 breaking ties on the horizon.
inline Vec3 orient_normal(const Vec3& candidate) {
  Vec3 n = candidate.normalized();
  bool flip = n.z < 0.0;
  if (n.z == 0.0) {
    if (n.x != 0.0)
      flip = n.x < 0.0;
    else
      flip = n.y < 0.0;
  }
  return flip ? Vec3{-n.x, -n.y, -n.z} : n;
}

struct PointFeatures {
  Vec3 point;
  std::array<double, 3> lambda{0.0, 0.0, 0.0};  // ascending
  double u = 0.0;
  double s = 0.0;
  double delta = 0.0;
  Vec3 normal{0.0, 0.0, 1.0};
  bool valid = false;
};

struct FeatureParams {
  int k_nn = 50;
  double d_nn = 0.25;
};

struct FeatureCloud {
  std::vector<PointFeatures> entries;
  FeatureParams params;

  std::size_t size() const { return entries.size(); }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (const auto& e : entries)
      if (e.valid) ++n;
    return n;
  }
};

/// Per-point neighborhood features: gather k_nn neighbors (the point itself
/// included), reject the point when it sits more than d_nn from the
/// neighborhood mean, otherwise eigendecompose the sample covariance
/// (1/(k-1) normalization, tiny negative eigenvalues clamped to zero).
inline FeatureCloud compute_features(const MapCloud& cloud, const KdTree& index,
                                     const FeatureParams& params = {}) {
  if (params.k_nn < 2) fail(errc::invalid_config, "k_nn must be >= 2");
  if (!(params.d_nn > 0.0)) fail(errc::invalid_config, "d_nn must be > 0");
  if (cloud.size() < static_cast<std::size_t>(params.k_nn))
    fail(errc::cloud_too_small, "cloud has " + std::to_string(cloud.size()) +
                                    " points, need k_nn = " + std::to_string(params.k_nn));

  FeatureCloud out;
  out.params = params;
  out.entries.resize(cloud.size());

  parallel_for(cloud.size(), [&](std::size_t i, unsigned) {
    PointFeatures& f = out.entries[i];
    f.point = cloud.points[i];
    const auto neighbors = index.knn(cloud.points[i], static_cast<std::size_t>(params.k_nn));
    const double k = static_cast<double>(neighbors.size());

    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& nb : neighbors) {
      const Vec3& p = index.points()[nb.index];
      mean += Eigen::Vector3d(p.x, p.y, p.z);
    }
    mean /= k;

    const Eigen::Vector3d q(f.point.x, f.point.y, f.point.z);
    if ((q - mean).norm() > params.d_nn) return;  // corner / map periphery

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const auto& nb : neighbors) {
      const Vec3& p = index.points()[nb.index];
      const Eigen::Vector3d d = Eigen::Vector3d(p.x, p.y, p.z) - mean;
      cov += d * d.transpose();
    }
    cov /= (k - 1.0);

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
    Eigen::Vector3d ev = solver.eigenvalues();  // ascending
    for (int a = 0; a < 3; ++a) ev[a] = std::max(ev[a], 0.0);
    if (!(ev[2] > 0.0)) return;  // all neighbors coincident

    f.lambda = {ev[0], ev[1], ev[2]};
    const ShapeValues sv = shape_values(ev[0], ev[1], ev[2]);
    f.u = sv.u;
    f.s = sv.s;
    f.delta = sv.delta;
    const Eigen::Vector3d n = solver.eigenvectors().col(0);
    f.normal = orient_normal({n.x(), n.y(), n.z()});
    f.valid = true;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Feature cloud I/O (PLY with u/s/delta/normal/valid properties)
// ---------------------------------------------------------------------------

inline void save_features(const std::string& path, const FeatureCloud& features,
                          bool binary = true) {
  ply::VertexTable table;
  const char* names[10] = {"x", "y", "z", "u", "s", "delta", "nx", "ny", "nz", "valid"};
  table.properties.resize(10);
  for (int c = 0; c < 10; ++c) {
    table.properties[c].name = names[c];
    table.properties[c].type = c < 3   ? ply::Scalar::Float64
                               : c < 9 ? ply::Scalar::Float32
                                       : ply::Scalar::UInt8;
    table.properties[c].values.reserve(features.entries.size());
  }
  for (const auto& e : features.entries) {
    const double row[10] = {e.point.x, e.point.y, e.point.z, e.u,        e.s,
                            e.delta,   e.normal.x, e.normal.y, e.normal.z,
                            e.valid ? 1.0 : 0.0};
    for (int c = 0; c < 10; ++c) table.properties[c].values.push_back(row[c]);
  }
  table.count = features.entries.size();
  ply::write(path, table, binary);
}

inline FeatureCloud load_features(const std::string& path) {
  const ply::VertexTable table = ply::read(path);
  const char* needed[10] = {"x", "y", "z", "u", "s", "delta", "nx", "ny", "nz", "valid"};
  const ply::Property* cols[10];
  for (int c = 0; c < 10; ++c) {
    cols[c] = table.find(needed[c]);
    if (!cols[c])
      fail(errc::corrupt_header, std::string("feature PLY lacks property '") + needed[c] + "'");
  }
  FeatureCloud out;
  const std::size_t n = cols[0]->values.size();
  out.entries.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    PointFeatures& f = out.entries[i];
    f.point = {cols[0]->values[i], cols[1]->values[i], cols[2]->values[i]};
    f.u = cols[3]->values[i];
    f.s = cols[4]->values[i];
    f.delta = cols[5]->values[i];
    f.normal = {cols[6]->values[i], cols[7]->values[i], cols[8]->values[i]};
    f.valid = cols[9]->values[i] != 0.0;
  }
  return out;
}

}  // namespace skyshade
