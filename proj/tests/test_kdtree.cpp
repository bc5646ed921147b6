#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <vector>

#include "skyshade/kdtree.hpp"

using namespace skyshade;

namespace {

// Forward linear scan with the same ordering contract as KdTree::knn:
// ascending (distance^2, index).
std::vector<Neighbor> scan_knn(const std::vector<Vec3>& pts, const Vec3& q, std::size_t k) {
  struct Entry {
    double dist2;
    std::size_t index;
  };
  std::vector<Entry> all(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) all[i] = {(pts[i] - q).squared_norm(), i};
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) {
    return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.index < b.index;
  });
  all.resize(std::min(k, all.size()));
  std::vector<Neighbor> out(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) out[i] = {all[i].index, std::sqrt(all[i].dist2)};
  return out;
}

bool same_neighbors(const std::vector<Neighbor>& a, const std::vector<Neighbor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].index != b[i].index || a[i].distance != b[i].distance) return false;
  return true;
}

std::vector<Vec3> mixed_cloud(std::uint64_t seed, std::size_t n) {
  std::mt19937_64 gen(seed);
  auto u = [&](double a, double b) { return a + (b - a) * ((gen() >> 11) * 0x1.0p-53); };
  std::vector<Vec3> pts;
  pts.reserve(n);
  // Uniform background plus tight clusters so tree paths of very different
  // depth get exercised.
  for (std::size_t i = 0; i < n / 2; ++i) pts.push_back({u(-50, 50), u(-50, 50), u(-50, 50)});
  for (int c = 0; c < 8; ++c) {
    const Vec3 center{u(-40, 40), u(-40, 40), u(-40, 40)};
    for (std::size_t i = 0; i < n / 16; ++i)
      pts.push_back(center + Vec3{u(-0.1, 0.1), u(-0.1, 0.1), u(-0.1, 0.1)});
  }
  while (pts.size() < n) pts.push_back({u(-50, 50), u(-50, 50), u(-50, 50)});
  return pts;
}

}  // namespace

TEST_CASE("knn matches a linear scan") {
  const auto pts = mixed_cloud(21, 4000);
  const KdTree tree(pts);
  REQUIRE(tree.size() == pts.size());

  std::mt19937_64 gen(22);
  auto u = [&](double a, double b) { return a + (b - a) * ((gen() >> 11) * 0x1.0p-53); };
  for (int q = 0; q < 300; ++q) {
    const Vec3 query{u(-60, 60), u(-60, 60), u(-60, 60)};
    for (std::size_t k : {std::size_t{1}, std::size_t{4}, std::size_t{16}, std::size_t{64}}) {
      const auto got = tree.knn(query, k);
      const auto want = scan_knn(pts, query, k);
      REQUIRE(same_neighbors(got, want));
    }
  }
}

TEST_CASE("knn with queries on stored points") {
  const auto pts = mixed_cloud(31, 1000);
  const KdTree tree(pts);
  for (std::size_t i : {std::size_t{0}, std::size_t{17}, std::size_t{999}}) {
    const auto got = tree.knn(pts[i], 3);
    CHECK(got[0].distance == 0.0);
    CHECK(same_neighbors(got, scan_knn(pts, pts[i], 3)));
  }
}

TEST_CASE("knn clamps k to the point count") {
  const auto pts = mixed_cloud(41, 37);
  const KdTree tree(pts);
  const auto got = tree.knn({0, 0, 0}, 1000);
  REQUIRE(got.size() == 37);
  CHECK(same_neighbors(got, scan_knn(pts, {0, 0, 0}, 37)));
  CHECK(std::is_sorted(got.begin(), got.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance;
  }));
}

TEST_CASE("knn tie-breaking is deterministic and index-ordered") {
  // Duplicated coordinates: every distance from the shared center ties.
  std::vector<Vec3> pts;
  for (int rep = 0; rep < 5; ++rep)
    for (int sx : {-1, 1})
      for (int sy : {-1, 1})
        for (int sz : {-1, 1}) pts.push_back({1.0 * sx, 1.0 * sy, 1.0 * sz});
  const KdTree tree(pts);
  const auto got = tree.knn({0, 0, 0}, 12);
  const auto want = scan_knn(pts, {0, 0, 0}, 12);
  REQUIRE(same_neighbors(got, want));
  for (std::size_t i = 1; i < got.size(); ++i) {
    CHECK(got[i].distance == got[0].distance);
    CHECK(got[i].index > got[i - 1].index);
  }
}

TEST_CASE("knn handles coincident and coplanar clouds") {
  // All points identical: the splitter has zero extent on every axis.
  std::vector<Vec3> same(100, Vec3{2.0, -3.0, 4.0});
  const KdTree tree_same(same);
  const auto got = tree_same.knn({2.0, -3.0, 4.0}, 5);
  REQUIRE(got.size() == 5);
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].index == i);
    CHECK(got[i].distance == 0.0);
  }

  // Coplanar cloud: z never splits.
  auto flat = mixed_cloud(51, 500);
  for (auto& p : flat) p.z = 1.25;
  const KdTree tree_flat(flat);
  for (int q = 0; q < 50; ++q) {
    const Vec3 query{static_cast<double>(q), 25.0 - q, 0.0};
    REQUIRE(same_neighbors(tree_flat.knn(query, 8), scan_knn(flat, query, 8)));
  }
}

TEST_CASE("knn rejects empty index and zero k") {
  auto code_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return errc::out_of_range;  // not reached
  };
  const KdTree empty;
  CHECK(code_of([&] { empty.knn({0, 0, 0}, 1); }) == errc::empty_cloud);
  const KdTree tree(std::vector<Vec3>{{1, 2, 3}});
  CHECK(code_of([&] { tree.knn({0, 0, 0}, 0); }) == errc::invalid_config);
}
