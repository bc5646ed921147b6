#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "skyshade/features.hpp"

using namespace skyshade;
using Catch::Matchers::WithinAbs;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "skyshade_test_features";
  std::filesystem::create_directories(dir);
  return dir / name;
}

struct Cov3 {
  double m[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
};

// Plain-loop sample covariance of the k nearest neighbors of cloud[i],
// independent of the production path.
Cov3 brute_cov(const MapCloud& cloud, std::size_t i, int k) {
  struct Entry {
    double d2;
    std::size_t idx;
  };
  std::vector<Entry> all(cloud.size());
  for (std::size_t j = 0; j < cloud.size(); ++j)
    all[j] = {(cloud.points[j] - cloud.points[i]).squared_norm(), j};
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) {
    return a.d2 != b.d2 ? a.d2 < b.d2 : a.idx < b.idx;
  });
  all.resize(static_cast<std::size_t>(k));
  Vec3 mean{0, 0, 0};
  for (const auto& e : all) mean += cloud.points[e.idx];
  mean = mean * (1.0 / k);
  Cov3 c;
  for (const auto& e : all) {
    const Vec3 d = cloud.points[e.idx] - mean;
    const double v[3] = {d.x, d.y, d.z};
    for (int r = 0; r < 3; ++r)
      for (int s = 0; s < 3; ++s) c.m[r][s] += v[r] * v[s];
  }
  for (int r = 0; r < 3; ++r)
    for (int s = 0; s < 3; ++s) c.m[r][s] /= (k - 1.0);
  return c;
}

MapCloud random_ball(std::uint64_t seed, std::size_t n, double radius) {
  std::mt19937_64 gen(seed);
  auto u = [&](double a, double b) { return a + (b - a) * ((gen() >> 11) * 0x1.0p-53); };
  MapCloud c;
  while (c.size() < n) {
    const Vec3 p{u(-radius, radius), u(-radius, radius), u(-radius, radius)};
    if (p.squared_norm() <= radius * radius) c.points.push_back(p);
  }
  return c;
}

}  // namespace

TEST_CASE("shape values at canonical eigenvalue triples") {
  const ShapeValues plane = shape_values(0.0, 1.0, 1.0);
  CHECK(plane.u == 0.0);
  CHECK(plane.s == 1.0);
  CHECK(plane.delta == -1.0);

  const ShapeValues line = shape_values(0.0, 0.0, 1.0);
  CHECK(line.u == 0.0);
  CHECK(line.s == 0.0);
  CHECK(line.delta == 0.0);

  const ShapeValues ball = shape_values(1.0, 1.0, 1.0);
  CHECK(ball.u == 1.0);
  CHECK(ball.s == 0.0);
  CHECK(ball.delta == 1.0);

  const ShapeValues mid = shape_values(0.0, 0.5, 1.0);
  CHECK(mid.u == 0.0);
  CHECK_THAT(mid.s, WithinAbs(0.5, 1e-15));
  CHECK_THAT(mid.delta, WithinAbs(-0.5, 1e-15));

  CHECK_THROWS_AS(shape_values(0.0, 0.0, 0.0), Error);
  CHECK_THROWS_AS(shape_values(-1.0, 0.0, -0.5), Error);
}

TEST_CASE("shape values stay inside [-1, 1]") {
  std::mt19937_64 gen(7);
  auto u01 = [&] { return (gen() >> 11) * 0x1.0p-53; };
  for (int i = 0; i < 5000; ++i) {
    double l[3] = {u01(), u01(), u01()};
    std::sort(l, l + 3);
    if (!(l[2] > 0.0)) continue;
    const ShapeValues sv = shape_values(l[0], l[1], l[2]);
    CHECK(sv.u >= 0.0);
    CHECK(sv.u <= 1.0);
    CHECK(sv.s >= 0.0);
    CHECK(sv.s <= 1.0);
    CHECK(sv.delta >= -1.0);
    CHECK(sv.delta <= 1.0);
    CHECK(sv.delta == sv.u - sv.s);
  }
}

TEST_CASE("orient normal makes candidates sky-facing with horizon tie-breaks") {
  const Vec3 up = orient_normal({0.0, 0.0, -2.0});
  CHECK(up.x == 0.0);
  CHECK(up.z == 1.0);

  const Vec3 keep = orient_normal({1.0, 1.0, 1.0});
  CHECK(keep.z > 0.0);
  CHECK_THAT(keep.norm(), WithinAbs(1.0, 1e-15));

  const Vec3 horizon_x = orient_normal({-3.0, 4.0, 0.0});
  CHECK_THAT(horizon_x.x, WithinAbs(0.6, 1e-15));
  CHECK_THAT(horizon_x.y, WithinAbs(-0.8, 1e-15));

  const Vec3 horizon_y = orient_normal({0.0, -2.0, 0.0});
  CHECK(horizon_y.y == 1.0);

  CHECK_THROWS_AS(orient_normal({0.0, 0.0, 0.0}), Error);
}

TEST_CASE("feature computation agrees with a plain-loop covariance") {
  const MapCloud cloud = random_ball(11, 400, 2.0);
  const KdTree tree(cloud.points);
  FeatureParams params;
  params.k_nn = 12;
  params.d_nn = 10.0;  // accept everything
  const FeatureCloud fc = compute_features(cloud, tree, params);
  REQUIRE(fc.size() == cloud.size());
  REQUIRE(fc.valid_count() == cloud.size());

  for (std::size_t i = 0; i < cloud.size(); i += 17) {
    const PointFeatures& f = fc.entries[i];
    const Cov3 c = brute_cov(cloud, i, params.k_nn);

    // Eigenvalue sum equals the trace and eigenvalues are ordered.
    const double trace = c.m[0][0] + c.m[1][1] + c.m[2][2];
    CHECK_THAT(f.lambda[0] + f.lambda[1] + f.lambda[2], WithinAbs(trace, 1e-12 * trace + 1e-15));
    CHECK(f.lambda[0] >= 0.0);
    CHECK(f.lambda[0] <= f.lambda[1]);
    CHECK(f.lambda[1] <= f.lambda[2]);

    // The stored normal is a unit eigenvector of the covariance with the
    // smallest eigenvalue.
    CHECK_THAT(f.normal.norm(), WithinAbs(1.0, 1e-12));
    const double n[3] = {f.normal.x, f.normal.y, f.normal.z};
    for (int r = 0; r < 3; ++r) {
      const double cn = c.m[r][0] * n[0] + c.m[r][1] * n[1] + c.m[r][2] * n[2];
      CHECK_THAT(cn - f.lambda[0] * n[r], WithinAbs(0.0, 1e-9 * f.lambda[2]));
    }

    // Scores are consistent with the stored eigenvalues.
    const ShapeValues sv = shape_values(f.lambda[0], f.lambda[1], f.lambda[2]);
    CHECK(f.u == sv.u);
    CHECK(f.s == sv.s);
    CHECK(f.delta == sv.delta);
  }
}

TEST_CASE("feature scores separate plane, line, and ball neighborhoods") {
  // 25 neighbors on a square grid form complete symmetric shells, so the
  // in-plane covariance is isotropic and delta hits -1 exactly.
  FeatureParams params;
  params.k_nn = 25;
  params.d_nn = 100.0;

  MapCloud plane;
  for (int ix = 0; ix < 20; ++ix)
    for (int iy = 0; iy < 20; ++iy) plane.points.push_back({0.1 * ix, 0.1 * iy, 3.0});
  const FeatureCloud fp = compute_features(plane, KdTree(plane.points), params);
  for (int ix = 5; ix < 15; ++ix)
    for (int iy = 5; iy < 15; ++iy) {
      const PointFeatures& f = fp.entries[static_cast<std::size_t>(ix) * 20 + iy];
      REQUIRE(f.valid);
      CHECK(f.delta <= -0.9);
      CHECK(f.normal.z > 0.999);
    }

  MapCloud line;
  for (int i = 0; i < 100; ++i) line.points.push_back({0.05 * i, 0.0, 0.0});
  const FeatureCloud fl = compute_features(line, KdTree(line.points), params);
  for (std::size_t i = 30; i < 70; ++i) {
    REQUIRE(fl.entries[i].valid);
    CHECK(std::abs(fl.entries[i].delta) <= 0.2);
  }

  // 33 neighbors on a cubic lattice form complete shells (r^2 <= 4), so the
  // volumetric second moments are isotropic and delta sits near +1. A random
  // ball at practical k would not do: eigenvalue sampling noise drags the
  // point-wise delta well below the nominal +1 (median ~0.47 at k = 50).
  FeatureParams ball_params;
  ball_params.k_nn = 33;
  ball_params.d_nn = 100.0;
  MapCloud ball;
  std::mt19937_64 gen(13);
  auto jitter = [&] { return 2e-3 * ((gen() >> 11) * 0x1.0p-53 - 0.5); };
  for (int x = -7; x <= 7; ++x)
    for (int y = -7; y <= 7; ++y)
      for (int z = -7; z <= 7; ++z)
        if (x * x + y * y + z * z <= 49)
          ball.points.push_back({x + jitter(), y + jitter(), z + jitter()});
  const FeatureCloud fb = compute_features(ball, KdTree(ball.points), ball_params);
  std::size_t interior = 0;
  for (std::size_t i = 0; i < ball.size(); ++i) {
    if (ball.points[i].norm() > 4.0) continue;  // keep full neighborhoods
    REQUIRE(fb.entries[i].valid);
    CHECK(fb.entries[i].delta >= 0.5);
    ++interior;
  }
  CHECK(interior >= 200);
}

TEST_CASE("points far from their neighborhood mean are marked invalid") {
  MapCloud cloud = random_ball(17, 60, 0.5);
  cloud.points.push_back({25.0, 0.0, 0.0});  // isolated outlier
  FeatureParams params;
  params.k_nn = 10;
  params.d_nn = 0.25;
  const FeatureCloud fc = compute_features(cloud, KdTree(cloud.points), params);
  CHECK_FALSE(fc.entries.back().valid);
  CHECK(fc.valid_count() < fc.size());
  CHECK(fc.valid_count() > 0);
}

TEST_CASE("coincident neighborhoods are invalid, not fatal") {
  MapCloud cloud;
  cloud.points.assign(50, Vec3{1.0, 2.0, 3.0});
  FeatureParams params;
  params.k_nn = 10;
  params.d_nn = 1.0;
  const FeatureCloud fc = compute_features(cloud, KdTree(cloud.points), params);
  CHECK(fc.valid_count() == 0);
}

TEST_CASE("feature computation validates its inputs") {
  const MapCloud cloud = random_ball(19, 30, 1.0);
  const KdTree tree(cloud.points);
  auto code_of = [&](FeatureParams p) {
    try {
      compute_features(cloud, tree, p);
    } catch (const Error& e) {
      return e.code();
    }
    return errc::out_of_range;  // not reached
  };
  CHECK(code_of({1, 0.25}) == errc::invalid_config);
  CHECK(code_of({10, 0.0}) == errc::invalid_config);
  CHECK(code_of({10, -1.0}) == errc::invalid_config);
  CHECK(code_of({31, 0.25}) == errc::cloud_too_small);
}

TEST_CASE("feature cloud round trips through ply") {
  const MapCloud cloud = random_ball(23, 200, 1.5);
  FeatureParams params;
  params.k_nn = 12;
  params.d_nn = 0.5;
  const FeatureCloud fc = compute_features(cloud, KdTree(cloud.points), params);

  for (bool binary : {true, false}) {
    const auto path = temp_file(binary ? "features_bin.ply" : "features_ascii.ply");
    save_features(path.string(), fc, binary);
    const FeatureCloud back = load_features(path.string());
    REQUIRE(back.size() == fc.size());
    CHECK(back.valid_count() == fc.valid_count());
    for (std::size_t i = 0; i < fc.size(); ++i) {
      // Coordinates are stored as float64, scores as float32.
      CHECK(back.entries[i].point.x == fc.entries[i].point.x);
      CHECK(back.entries[i].point.z == fc.entries[i].point.z);
      CHECK_THAT(back.entries[i].delta, WithinAbs(fc.entries[i].delta, 1e-6));
      CHECK_THAT(back.entries[i].normal.z, WithinAbs(fc.entries[i].normal.z, 1e-6));
      CHECK(back.entries[i].valid == fc.entries[i].valid);
    }
  }
}
