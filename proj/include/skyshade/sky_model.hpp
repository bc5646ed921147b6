#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "skyshade/error.hpp"
#include "skyshade/geometry.hpp"
#include "skyshade/nmea.hpp"

namespace skyshade {

/// Hemispherical grid with azimuth cells of e degrees and elevation cells of
/// l degrees. Both must divide their span evenly (defaults 7.5 x 9 -> 48x10).
struct SkyGrid {
  double az_step_deg = 7.5;
  double el_step_deg = 9.0;

  SkyGrid() = default;
  SkyGrid(double e, double l) : az_step_deg(e), el_step_deg(l) { validate(); }

  void validate() const {
    if (!(az_step_deg > 0.0) || !(el_step_deg > 0.0))
      fail(errc::invalid_config, "grid: cell sizes must be positive");
    if (std::abs(360.0 / az_step_deg - std::round(360.0 / az_step_deg)) > 1e-9)
      fail(errc::invalid_config, "grid: azimuth step must divide 360 evenly");
    if (std::abs(90.0 / el_step_deg - std::round(90.0 / el_step_deg)) > 1e-9)
      fail(errc::invalid_config, "grid: elevation step must divide 90 evenly");
  }

  int n_az() const { return static_cast<int>(std::round(360.0 / az_step_deg)); }
  int n_el() const { return static_cast<int>(std::round(90.0 / el_step_deg)); }
  std::size_t cell_count() const {
    return static_cast<std::size_t>(n_az()) * static_cast<std::size_t>(n_el());
  }

  double az_center(int i) const { return (i + 0.5) * az_step_deg; }
  double el_center(int j) const { return (j + 0.5) * el_step_deg; }

  std::size_t flat(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(n_az()) +
           static_cast<std::size_t>(i);
  }

  bool operator==(const SkyGrid& o) const {
    return az_step_deg == o.az_step_deg && el_step_deg == o.el_step_deg;
  }
};

struct CellIndex {
  int az;
  int el;
};

/// Maps a sky direction to its grid cell. Azimuth wraps; the zenith row
/// absorbs elevation == 90. Negative elevation is an error.
inline CellIndex cell_index(double azimuth_deg, double elevation_deg, const SkyGrid& grid) {
  if (elevation_deg < 0.0)
    fail(errc::out_of_range,
         "elevation " + std::to_string(elevation_deg) + " below horizon");
  const int naz = grid.n_az();
  int i = static_cast<int>(std::floor(azimuth_deg / grid.az_step_deg)) % naz;
  if (i < 0) i += naz;
  int j = static_cast<int>(std::floor(elevation_deg / grid.el_step_deg));
  if (j > grid.n_el() - 1) j = grid.n_el() - 1;
  return {i, j};
}

/// Angular spread of one satellite's kernel, in degrees of great-circle
/// distance. The reference value 12.5 is labeled a variance upstream but has
/// degree units; it is treated as the standard deviation here and is
/// configurable.
struct SatelliteKernelParams {
  double sigma_deg = 12.5;
};

/// Discretized Gaussian-mixture sky density. Cells sum to source_count by
/// per-satellite normalization.
struct SkyMap {
  SkyGrid grid;
  std::vector<double> cells;  // row-major, [el][az]
  int source_count = 0;

  double at(int i, int j) const { return cells[grid.flat(i, j)]; }
  double& at(int i, int j) { return cells[grid.flat(i, j)]; }

  double sum() const {
    double s = 0.0;
    for (double c : cells) s += c;
    return s;
  }
};

/// Builds the sky map from a snapshot: every viable satellite deposits an
/// isotropic Gaussian over great-circle distance, evaluated at cell centers
/// and normalized to unit mass over the visible hemisphere.
inline SkyMap build_sky_map(const nmea::ConstellationSnapshot& snapshot, const SkyGrid& grid,
                            const SatelliteKernelParams& kernel = {}) {
  if (!(kernel.sigma_deg > 0.0)) fail(errc::invalid_config, "sigma_deg must be > 0");
  grid.validate();

  SkyMap map;
  map.grid = grid;
  map.cells.assign(grid.cell_count(), 0.0);

  const int naz = grid.n_az();
  const int nel = grid.n_el();
  // (d / sigma)^2 stays NaN-free even when sigma^2 would underflow.
  const double inv_sigma = 1.0 / kernel.sigma_deg;

  std::vector<double> weights(grid.cell_count());
  std::vector<double> ordered(grid.cell_count());
  for (const auto& obs : snapshot.observations) {
    if (!obs.snr_db || *obs.snr_db < snapshot.snr_cutoff_db ||
        obs.elevation_deg < snapshot.elevation_mask_deg)
      continue;
    for (int j = 0; j < nel; ++j) {
      const double elc = grid.el_center(j);
      for (int i = 0; i < naz; ++i) {
        const double d = angular_distance_deg(obs.azimuth_deg, obs.elevation_deg,
                                              grid.az_center(i), elc) *
                         inv_sigma;
        weights[grid.flat(i, j)] = std::exp(-0.5 * d * d);
      }
    }
    // Summing in value order makes the normalizer independent of where the
    // kernel sits on the grid, which keeps azimuth rotations exactly cyclic.
    ordered = weights;
    std::sort(ordered.begin(), ordered.end());
    double total = 0.0;
    for (double w : ordered) total += w;
    if (total > 0.0) {
      for (std::size_t c = 0; c < weights.size(); ++c) map.cells[c] += weights[c] / total;
    } else {
      // Kernel underflowed everywhere (pathologically small sigma): all the
      // mass goes to the satellite's own cell so the sum property holds.
      const CellIndex ci = cell_index(obs.azimuth_deg, obs.elevation_deg, grid);
      map.at(ci.az, ci.el) += 1.0;
    }
    ++map.source_count;
  }
  return map;
}

/// CSV matrix export: one row per elevation bin ascending, columns from north
/// clockwise. Pair with a JSON sidecar for the grid metadata.
inline void write_sky_map_csv(std::ostream& out, const SkyMap& map) {
  const int naz = map.grid.n_az();
  const int nel = map.grid.n_el();
  char buf[32];
  for (int j = 0; j < nel; ++j) {
    for (int i = 0; i < naz; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", map.at(i, j));
      out << buf << (i + 1 == naz ? "" : ",");
    }
    out << "\n";
  }
}

}  // namespace skyshade
