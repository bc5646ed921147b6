#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "skyshade/sky_model.hpp"

using namespace skyshade;
using Catch::Matchers::WithinAbs;

namespace {

nmea::SatelliteObservation sat(double az, double el, double snr) {
  nmea::SatelliteObservation o;
  o.system = nmea::System::Gps;
  o.prn = 1;
  o.azimuth_deg = az;
  o.elevation_deg = el;
  o.snr_db = snr;
  return o;
}

}  // namespace

TEST_CASE("grid geometry") {
  const SkyGrid grid;
  CHECK(grid.n_az() == 48);
  CHECK(grid.n_el() == 10);
  CHECK(grid.cell_count() == 480);
  CHECK(grid.az_center(0) == 3.75);
  CHECK(grid.el_center(9) == 85.5);
  CHECK(grid.flat(0, 1) == 48);

  const SkyGrid fine{3.75, 4.5};
  CHECK(fine.n_az() == 96);
  CHECK(fine.n_el() == 20);

  CHECK_THROWS_AS(SkyGrid(7.0, 9.0), Error);   // 7 does not divide 360
  CHECK_THROWS_AS(SkyGrid(7.5, 8.0), Error);   // 8 does not divide 90
  CHECK_THROWS_AS(SkyGrid(0.0, 9.0), Error);
  CHECK_THROWS_AS(SkyGrid(-7.5, 9.0), Error);
}

TEST_CASE("cell index boundaries") {
  const SkyGrid grid;
  CHECK(cell_index(359.9, 0.0, grid).az == 47);
  CHECK(cell_index(0.0, 89.9, grid).el == 9);
  CHECK(cell_index(0.0, 90.0, grid).el == 9);  // zenith clamps into the top row
  CHECK(cell_index(7.5, 0.0, grid).az == 1);
  CHECK(cell_index(7.4999, 0.0, grid).az == 0);
  CHECK(cell_index(0.0, 9.0, grid).el == 1);
  CHECK(cell_index(360.0, 0.0, grid).az == 0);
  CHECK_THROWS_AS(cell_index(10.0, -0.1, grid), Error);
}

TEST_CASE("sky map mass equals viable count") {
  std::mt19937_64 gen(3);
  auto u = [&](double a, double b) { return a + (b - a) * ((gen() >> 11) * 0x1.0p-53); };
  const SkyGrid grid;
  for (int trial = 0; trial < 200; ++trial) {
    nmea::ConstellationSnapshot snap;
    const int n = static_cast<int>(gen() % 30);
    for (int i = 0; i < n; ++i)
      snap.observations.push_back(sat(u(0, 360), u(0, 90), u(20, 55)));
    if (trial % 3 == 0 && !snap.observations.empty())
      snap.observations.front().snr_db.reset();  // untracked satellites ignored

    const SkyMap map = build_sky_map(snap, grid);
    CHECK(map.source_count == snap.viable_count());
    CHECK_THAT(map.sum(), WithinAbs(static_cast<double>(snap.viable_count()), 1e-9));
    for (double c : map.cells) CHECK(c >= 0.0);
  }
}

TEST_CASE("zenith kernel concentration") {
  nmea::ConstellationSnapshot snap;
  snap.observations = {sat(123.0, 90.0, 45.0)};
  const SkyGrid grid;
  const SkyMap map = build_sky_map(snap, grid);
  CHECK_THAT(map.sum(), WithinAbs(1.0, 1e-12));

  // Mass within 2*sigma (25 deg) of the zenith: the top three elevation rows.
  double near = 0.0;
  for (int j = 7; j < 10; ++j)
    for (int i = 0; i < 48; ++i) near += map.at(i, j);
  CHECK_THAT(near, WithinAbs(0.9727405378933462, 1e-6));
  CHECK(near >= 0.95);

  double top_row = 0.0;
  for (int i = 0; i < 48; ++i) top_row += map.at(i, 9);
  CHECK_THAT(top_row, WithinAbs(0.5384312717374253, 1e-6));
}

TEST_CASE("kernel rotates cyclically") {
  const SkyGrid grid;
  nmea::ConstellationSnapshot base;
  base.observations = {sat(33.75, 40.5, 45.0)};
  const SkyMap ref = build_sky_map(base, grid);

  for (int k : {1, 5, 17, 47}) {
    nmea::ConstellationSnapshot rotated;
    rotated.observations = {sat(33.75 + 7.5 * k, 40.5, 45.0)};
    const SkyMap map = build_sky_map(rotated, grid);
    for (int j = 0; j < 10; ++j)
      for (int i = 0; i < 48; ++i)
        CHECK(map.at((i + k) % 48, j) == ref.at(i, j));  // bit-identical shift
  }
}

TEST_CASE("cutoffs exclude satellites from the map") {
  nmea::ConstellationSnapshot snap;
  snap.observations = {sat(10, 10, 45), sat(10, 45, 30)};  // low elevation, low snr
  const SkyMap map = build_sky_map(snap, SkyGrid{});
  CHECK(map.source_count == 0);
  CHECK_THAT(map.sum(), WithinAbs(0.0, 0.0));

  snap.elevation_mask_deg = 5.0;
  snap.snr_cutoff_db = 25.0;
  const SkyMap open_map = build_sky_map(snap, SkyGrid{});
  CHECK(open_map.source_count == 2);
}

TEST_CASE("degenerate sigma keeps the sum property") {
  nmea::ConstellationSnapshot snap;
  snap.observations = {sat(100.0, 45.0, 45.0)};
  const SkyMap map = build_sky_map(snap, SkyGrid{}, {1e-3});
  CHECK_THAT(map.sum(), WithinAbs(1.0, 1e-12));
  CHECK_THROWS_AS(build_sky_map(snap, SkyGrid{}, {0.0}), Error);
  CHECK_THROWS_AS(build_sky_map(snap, SkyGrid{}, {-1.0}), Error);
}

TEST_CASE("sky map csv layout") {
  nmea::ConstellationSnapshot snap;
  snap.observations = {sat(3.75, 85.5, 45.0)};
  const SkyMap map = build_sky_map(snap, SkyGrid{});
  std::ostringstream out;
  write_sky_map_csv(out, map);

  std::istringstream in(out.str());
  std::string line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  REQUIRE(rows.size() == 10);
  for (const auto& row : rows) CHECK(row.size() == 48);
  // One row per elevation bin, ascending: the satellite sits in the top row.
  CHECK(rows[9][0] == map.at(0, 9));
  double total = 0.0;
  for (const auto& row : rows)
    for (double c : row) total += c;
  CHECK_THAT(total, WithinAbs(1.0, 1e-9));
}
