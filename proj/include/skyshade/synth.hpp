#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "skyshade/cloud.hpp"
#include "skyshade/error.hpp"
#include "skyshade/geometry.hpp"

namespace skyshade::synth {

namespace detail {

/// mt19937_64 with fixed-bit-layout draws, so clouds are reproducible across
/// standard libraries (distribution classes are not pinned by the standard).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }  // [0, 1)
  double uniform(double a, double b) { return a + (b - a) * unit(); }

  double gauss() {  // Box-Muller with a cached spare
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - unit();  // (0, 1]
    const double u2 = unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * kPi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace detail

/// Horizontal plane z ~ 0: uniform over [-half, half]^2 with Gaussian height
/// jitter.
inline MapCloud make_plane(std::uint64_t seed, double half_extent, std::size_t count,
                           double jitter = 0.01) {
  detail::Rng rng(seed);
  MapCloud cloud;
  cloud.points.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    cloud.points.push_back({rng.uniform(-half_extent, half_extent),
                            rng.uniform(-half_extent, half_extent), jitter * rng.gauss()});
  return cloud;
}

/// Segment along +x with isotropic jitter; exercises the line->edge feature
/// case.
inline MapCloud make_line(std::uint64_t seed, double length, std::size_t count,
                          double jitter = 0.01) {
  detail::Rng rng(seed);
  MapCloud cloud;
  cloud.points.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    cloud.points.push_back({rng.uniform(0.0, length), jitter * rng.gauss(), jitter * rng.gauss()});
  return cloud;
}

/// Uniform density inside a ball centered at the origin.
inline MapCloud make_ball(std::uint64_t seed, double radius, std::size_t count) {
  detail::Rng rng(seed);
  MapCloud cloud;
  cloud.points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double r = radius * std::cbrt(rng.unit());
    const double z = rng.uniform(-1.0, 1.0);
    const double phi = rng.uniform(0.0, 2.0 * kPi);
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    cloud.points.push_back({r * s * std::cos(phi), r * s * std::sin(phi), r * z});
  }
  return cloud;
}

/// Vertical wall in the plane y = standoff: x in [-width/2, width/2],
/// z in [0, height], Gaussian jitter through the wall.
inline MapCloud make_wall(std::uint64_t seed, double width, double height, double standoff,
                          std::size_t count, double jitter = 0.01) {
  detail::Rng rng(seed);
  MapCloud cloud;
  cloud.points.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    cloud.points.push_back({rng.uniform(-width / 2.0, width / 2.0), standoff + jitter * rng.gauss(),
                            rng.uniform(0.0, height)});
  return cloud;
}

/// Hemispherical dome over the origin. structured=true samples the shell
/// surface (locally planar, delta near -1); structured=false fills a thick
/// shell volumetrically (locally isotropic, high delta).
inline MapCloud make_dome(std::uint64_t seed, double radius, std::size_t count, bool structured,
                          double thickness = 3.0, double jitter = 0.01) {
  detail::Rng rng(seed);
  MapCloud cloud;
  cloud.points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double z = rng.unit();  // uniform in area over the hemisphere
    const double phi = rng.uniform(0.0, 2.0 * kPi);
    const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double r = structured ? radius + jitter * rng.gauss() : radius - thickness * rng.unit();
    cloud.points.push_back({r * s * std::cos(phi), r * s * std::sin(phi), r * z});
  }
  return cloud;
}

/// CLI-facing scene dispatcher. size and count of 0 pick per-scene defaults;
/// delta selects the dome character (<= 0 shell surface, > 0 volumetric).
struct SceneSpec {
  std::string scene = "plane";
  std::uint64_t seed = 0;
  std::size_t count = 0;
  double size = 0.0;
  double delta = -1.0;
};

inline MapCloud generate_scene(const SceneSpec& spec) {
  const std::size_t n = spec.count;
  const double size = spec.size;
  if (spec.scene == "plane")
    return make_plane(spec.seed, size > 0.0 ? size : 10.0, n ? n : 10000);
  if (spec.scene == "field")
    return make_plane(spec.seed, size > 0.0 ? size : 30.0, n ? n : 90000);
  if (spec.scene == "line") return make_line(spec.seed, size > 0.0 ? size : 10.0, n ? n : 2000);
  if (spec.scene == "ball") return make_ball(spec.seed, size > 0.0 ? size : 5.0, n ? n : 20000);
  if (spec.scene == "wall")
    return make_wall(spec.seed, size > 0.0 ? size : 30.0, 15.0, 10.0, n ? n : 20000);
  if (spec.scene == "dome")
    return make_dome(spec.seed, size > 0.0 ? size : 10.0, n ? n : 125000, spec.delta <= 0.0);
  fail(errc::invalid_config,
       "unknown scene '" + spec.scene + "' (plane|field|line|ball|wall|dome)");
}

}  // namespace skyshade::synth
