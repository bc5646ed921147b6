#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "skyshade/error.hpp"

namespace skyshade {

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * (kPi / 180.0); }
inline double rad2deg(double r) { return r * (180.0 / kPi); }

/// 3D point / vector in the ENU map frame (+x east, +y north, +z up), meters.
struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3() = default;
  Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double squared_norm() const { return dot(*this); }
  double norm() const { return std::sqrt(squared_norm()); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }

  Vec3 normalized() const {
    const double n = norm();
    if (n == 0.0) fail(errc::zero_vector, "cannot normalize zero vector");
    return {x / n, y / n, z / n};
  }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// Row-major 3x3 matrix, just enough for the rotations this pipeline needs.
struct Mat3 {
  double m[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

  static Mat3 identity() { return {}; }

  Vec3 apply(const Vec3& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }

  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.m[i][j] = m[j][i];
    return r;
  }

  /// Rodrigues rotation about a unit axis.
  static Mat3 axis_angle(const Vec3& axis, double angle_rad) {
    const double c = std::cos(angle_rad);
    const double s = std::sin(angle_rad);
    const double t = 1.0 - c;
    const double ax = axis.x, ay = axis.y, az = axis.z;
    Mat3 r;
    r.m[0][0] = c + ax * ax * t;
    r.m[0][1] = ax * ay * t - az * s;
    r.m[0][2] = ax * az * t + ay * s;
    r.m[1][0] = ay * ax * t + az * s;
    r.m[1][1] = c + ay * ay * t;
    r.m[1][2] = ay * az * t - ax * s;
    r.m[2][0] = az * ax * t - ay * s;
    r.m[2][1] = az * ay * t + ax * s;
    r.m[2][2] = c + az * az * t;
    return r;
  }
};

/// Sky direction for (azimuth clockwise from north, elevation), as an ENU
/// unit vector.
inline Vec3 sky_direction(double azimuth_deg, double elevation_deg) {
  const double az = deg2rad(azimuth_deg);
  const double el = deg2rad(elevation_deg);
  return {std::sin(az) * std::cos(el), std::cos(az) * std::cos(el), std::sin(el)};
}

/// Inverse of sky_direction for a (not necessarily unit) upward vector.
/// Returns {azimuth in [0,360), elevation in [-90,90]}.
struct AzEl {
  double azimuth_deg;
  double elevation_deg;
};

inline AzEl azel_from_direction(const Vec3& d) {
  const double n = d.norm();
  if (n == 0.0) fail(errc::zero_vector, "direction has zero length");
  double el = rad2deg(std::asin(std::clamp(d.z / n, -1.0, 1.0)));
  double az = rad2deg(std::atan2(d.x, d.y));
  if (az < 0.0) az += 360.0;
  if (az >= 360.0) az = 0.0;
  return {az, el};
}

/// Great-circle angle in degrees between two sky directions. The azimuth
/// difference is wrapped into [-180, 180] while still in degrees (fmod and
/// the +-360 adjustment are exact), so equal azimuth differences give
/// bit-identical results no matter how the inputs wrap around the circle.
inline double angular_distance_deg(double az1_deg, double el1_deg, double az2_deg,
                                   double el2_deg) {
  const double e1 = deg2rad(el1_deg);
  const double e2 = deg2rad(el2_deg);
  double da_deg = std::fmod(az1_deg - az2_deg, 360.0);
  if (da_deg > 180.0)
    da_deg -= 360.0;
  else if (da_deg < -180.0)
    da_deg += 360.0;
  const double da = deg2rad(da_deg);
  const double c =
      std::sin(e1) * std::sin(e2) + std::cos(e1) * std::cos(e2) * std::cos(da);
  return rad2deg(std::acos(std::clamp(c, -1.0, 1.0)));
}

}  // namespace skyshade
