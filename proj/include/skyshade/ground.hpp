#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "skyshade/error.hpp"
#include "skyshade/features.hpp"
#include "skyshade/geometry.hpp"
#include "skyshade/ply.hpp"

namespace skyshade {

/// Virtual receiver standing h_ant meters above a ground point, antenna mast
/// along the local surface normal.
struct ReceiverPose {
  Vec3 position;
  Vec3 normal{0.0, 0.0, 1.0};
  double h_ant = 1.0;
};

struct GroundParams {
  double delta_ground = -0.6;
  double epsilon_deg = 10.0;
  double h_ant = 1.0;
};

struct GroundSet {
  std::vector<ReceiverPose> poses;
  GroundParams params;
};

/// Keeps valid points that are locally planar (delta < delta_ground) and
/// near-horizontal (arccos(n_z) < epsilon), and raises each by h_ant along
/// its normal.
inline GroundSet segment_ground(const FeatureCloud& features, const GroundParams& params = {}) {
  if (params.delta_ground < -1.0 || params.delta_ground > 1.0)
    fail(errc::invalid_config, "delta_ground must lie in [-1, 1]");
  if (!(params.epsilon_deg > 0.0) || params.epsilon_deg >= 90.0)
    fail(errc::invalid_config, "epsilon_deg must lie in (0, 90)");
  if (!(params.h_ant > 0.0)) fail(errc::invalid_config, "h_ant must be > 0");

  const double cos_eps = std::cos(deg2rad(params.epsilon_deg));
  GroundSet out;
  out.params = params;
  for (const auto& f : features.entries) {
    if (!f.valid) continue;
    if (!(f.delta < params.delta_ground)) continue;
    if (!(f.normal.z > cos_eps)) continue;
    out.poses.push_back({f.point + f.normal * params.h_ant, f.normal, params.h_ant});
  }
  return out;
}

/// Rotation taking map-frame vectors into the receiver's sky frame: the
/// minimal rotation mapping the pose normal onto +z (axis = normal x z_hat),
/// so azimuth zero stays at the projection of map north.
inline Mat3 pose_frame(const ReceiverPose& pose) {
  const Vec3 n = pose.normal.normalized();
  if (!(n.z > 0.0)) fail(errc::degenerate_normal, "pose normal does not face the sky");
  const Vec3 axis = n.cross({0.0, 0.0, 1.0});
  const double axis_norm = axis.norm();
  if (axis_norm == 0.0) return Mat3::identity();
  const double angle = std::atan2(axis_norm, n.z);
  return Mat3::axis_angle(axis * (1.0 / axis_norm), angle);
}

// ---------------------------------------------------------------------------
// Pose I/O (PLY positions + normals)
// ---------------------------------------------------------------------------

inline void save_ground(const std::string& path, const GroundSet& ground, bool binary = true) {
  ply::VertexTable table;
  const char* names[6] = {"x", "y", "z", "nx", "ny", "nz"};
  table.properties.resize(6);
  for (int c = 0; c < 6; ++c) {
    table.properties[c].name = names[c];
    table.properties[c].type = c < 3 ? ply::Scalar::Float64 : ply::Scalar::Float32;
    table.properties[c].values.reserve(ground.poses.size());
  }
  for (const auto& pose : ground.poses) {
    const double row[6] = {pose.position.x, pose.position.y, pose.position.z,
                           pose.normal.x,   pose.normal.y,   pose.normal.z};
    for (int c = 0; c < 6; ++c) table.properties[c].values.push_back(row[c]);
  }
  table.count = ground.poses.size();
  ply::write(path, table, binary);
}

inline GroundSet load_ground(const std::string& path, double h_ant = 1.0) {
  const ply::VertexTable table = ply::read(path);
  const char* needed[6] = {"x", "y", "z", "nx", "ny", "nz"};
  const ply::Property* cols[6];
  for (int c = 0; c < 6; ++c) {
    cols[c] = table.find(needed[c]);
    if (!cols[c])
      fail(errc::corrupt_header, std::string("ground PLY lacks property '") + needed[c] + "'");
  }
  GroundSet out;
  out.params.h_ant = h_ant;
  const std::size_t n = cols[0]->values.size();
  out.poses.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ReceiverPose pose;
    pose.position = {cols[0]->values[i], cols[1]->values[i], cols[2]->values[i]};
    pose.normal = {cols[3]->values[i], cols[4]->values[i], cols[5]->values[i]};
    pose.h_ant = h_ant;
    out.poses.push_back(pose);
  }
  return out;
}

}  // namespace skyshade
