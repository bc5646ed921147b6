#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "skyshade/error.hpp"
#include "skyshade/features.hpp"
#include "skyshade/geometry.hpp"
#include "skyshade/ground.hpp"
#include "skyshade/ply.hpp"
#include "skyshade/sky_model.hpp"
#include "skyshade/threading.hpp"

namespace skyshade {

/// Signal reduction model: sigmoid over the median spherical level (occlusion)
/// times an exponential in the point count (absorption).
struct ReductionParams {
  double alpha = 4.0;
  double beta = 0.25;
  double gamma = 1e-10;
  int m_occ = 5;

  void validate() const {
    if (!(alpha > 0.0)) fail(errc::invalid_config, "alpha must be > 0");
    if (beta < -1.0 || beta > 1.0) fail(errc::invalid_config, "beta must lie in [-1, 1]");
    if (!(gamma >= 0.0)) fail(errc::invalid_config, "gamma must be >= 0");
    if (m_occ < 1) fail(errc::invalid_config, "m_occ must be >= 1");
  }
};

/// p = sigmoid(alpha * (delta_med - beta)) * exp(-gamma * m), in (0, 1].
inline double reduction(double delta_med, double m, const ReductionParams& params) {
  const double sigmoid = 1.0 / (1.0 + std::exp(-params.alpha * (delta_med - params.beta)));
  return sigmoid * std::exp(-params.gamma * m);
}

/// Per-pose hemisphere statistics: per cell the count m of map points and the
/// median spherical level of those points (NaN while m = 0).
struct SkyHistogram {
  SkyGrid grid;
  std::vector<std::uint32_t> counts;    // row-major [el][az]
  std::vector<double> delta_med;        // NaN where counts == 0

  explicit SkyHistogram(const SkyGrid& g = {})
      : grid(g),
        counts(g.cell_count(), 0),
        delta_med(g.cell_count(), std::numeric_limits<double>::quiet_NaN()) {}

  std::uint64_t total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
};

/// Valid feature entries flattened into parallel arrays; the histogram inner
/// loop streams these instead of the full PointFeatures records.
struct FeaturePack {
  std::vector<double> px, py, pz, delta;

  std::size_t size() const { return px.size(); }
};

inline FeaturePack pack_features(const FeatureCloud& features) {
  FeaturePack pack;
  pack.px.reserve(features.entries.size());
  pack.py.reserve(features.entries.size());
  pack.pz.reserve(features.entries.size());
  pack.delta.reserve(features.entries.size());
  for (const auto& e : features.entries) {
    if (!e.valid) continue;
    pack.px.push_back(e.point.x);
    pack.py.push_back(e.point.y);
    pack.pz.push_back(e.point.z);
    pack.delta.push_back(e.delta);
  }
  return pack;
}

namespace detail {

/// Bins sky directions into grid cells without per-point transcendentals:
/// elevation rows compare rz^2 against precomputed sin^2 boundaries and
/// azimuth columns test cross-product signs against boundary rays. Any
/// comparison that lands inside a small guard band defers to the reference
/// azel_from_direction / cell_index pair, so results match it exactly.
class CellBinner {
 public:
  explicit CellBinner(const SkyGrid& grid)
      : grid_(grid),
        naz_(grid.n_az()),
        nel_(grid.n_el()),
        quad_(grid.n_az() % 4 == 0 ? grid.n_az() / 4 : 0) {
    el_t_.assign(static_cast<std::size_t>(nel_), 0.0);
    for (int b = 1; b < nel_; ++b) {
      const double s = std::sin(deg2rad(b * grid.el_step_deg));
      el_t_[static_cast<std::size_t>(b)] = s * s;
    }
    if (quad_ > 0) {
      az_scale_ = naz_ / (2.0 * kPi);
      az_cos_.resize(static_cast<std::size_t>(naz_));
      az_sin_.resize(static_cast<std::size_t>(naz_));
      for (int g = 0; g < naz_; ++g) {
        const double th = deg2rad(g * grid.az_step_deg);
        az_cos_[static_cast<std::size_t>(g)] = std::cos(th);
        az_sin_[static_cast<std::size_t>(g)] = std::sin(th);
      }
    }
  }

  /// Flat cell index of direction (rx, ry, rz); requires rz > 0.
  std::size_t bin(double rx, double ry, double rz) const {
    if (quad_ == 0) return reference(rx, ry, rz);

    const double n2 = rx * rx + ry * ry + rz * rz;
    const double z2 = rz * rz;
    // Count elevation boundaries at or below z2/n2, branch-free, then reject
    // results within the guard band of either adjacent boundary.
    int row = 0;
    for (int b = 1; b < nel_; ++b)
      row += z2 >= el_t_[static_cast<std::size_t>(b)] * n2 ? 1 : 0;
    const double el_guard = kGuard * n2;
    if (row > 0 && std::abs(z2 - el_t_[static_cast<std::size_t>(row)] * n2) <= el_guard)
      return reference(rx, ry, rz);
    if (row + 1 < nel_ &&
        std::abs(z2 - el_t_[static_cast<std::size_t>(row + 1)] * n2) <= el_guard)
      return reference(rx, ry, rz);

    // Guess the azimuth column with an octant-folded atan approximation
    // (max error ~0.004 rad), then confirm the direction lies strictly
    // between the guessed column's boundary rays via cross-product signs.
    const double ax = std::abs(rx), ay = std::abs(ry);
    const double mn = ax < ay ? ax : ay;
    const double mx = ax < ay ? ay : ax;
    const double t = mx > 0.0 ? mn / mx : 0.0;
    const double base = t * (0.7853981633974483 + 0.273 * (1.0 - t));
    double a = ax <= ay ? base : kPi / 2.0 - base;
    if (ry < 0.0) a = kPi - a;
    if (rx < 0.0) a = 2.0 * kPi - a;
    int col = static_cast<int>(a * az_scale_);
    if (col >= naz_) col = naz_ - 1;
    const int hi = col + 1 == naz_ ? 0 : col + 1;
    const double c_lo = rx * az_cos_[static_cast<std::size_t>(col)] -
                        ry * az_sin_[static_cast<std::size_t>(col)];
    const double c_hi = rx * az_cos_[static_cast<std::size_t>(hi)] -
                        ry * az_sin_[static_cast<std::size_t>(hi)];
    const double az_guard = kGuard * (ax + ay);
    if (!(c_lo > az_guard) || !(-c_hi > az_guard)) return reference(rx, ry, rz);
    return grid_.flat(col, row);
  }

  std::size_t reference(double rx, double ry, double rz) const {
    const AzEl ae = azel_from_direction({rx, ry, rz});
    const CellIndex ci = cell_index(ae.azimuth_deg, ae.elevation_deg, grid_);
    return grid_.flat(ci.az, ci.el);
  }

 private:
  static constexpr double kGuard = 1e-12;

  SkyGrid grid_;
  int naz_;
  int nel_;
  int quad_;
  double az_scale_ = 0.0;
  std::vector<double> el_t_;
  std::vector<double> az_cos_, az_sin_;
};

}  // namespace detail

/// Reusable per-thread buffers: one member list per sky cell. Capacity
/// persists across poses so steady-state histogram building does not allocate.
struct HistogramScratch {
  std::vector<std::vector<double>> members;

  void reset(std::size_t cell_count) {
    if (members.size() != cell_count) members.assign(cell_count, {});
    for (auto& m : members) m.clear();
  }
};

/// Bins every packed point with positive apparent elevation in the pose's sky
/// frame; max_range <= 0 means unlimited.
inline void build_histogram_into(const ReceiverPose& pose, const FeaturePack& pack,
                                 const SkyGrid& grid, double max_range,
                                 HistogramScratch& scratch, SkyHistogram& out) {
  grid.validate();
  out.grid = grid;
  out.counts.assign(grid.cell_count(), 0);
  out.delta_med.assign(grid.cell_count(), std::numeric_limits<double>::quiet_NaN());
  scratch.reset(grid.cell_count());

  const Mat3 frame = pose_frame(pose);
  const double r00 = frame.m[0][0], r01 = frame.m[0][1], r02 = frame.m[0][2];
  const double r10 = frame.m[1][0], r11 = frame.m[1][1], r12 = frame.m[1][2];
  const double r20 = frame.m[2][0], r21 = frame.m[2][1], r22 = frame.m[2][2];
  const double ox = pose.position.x, oy = pose.position.y, oz = pose.position.z;
  const double range2 = max_range > 0.0 ? max_range * max_range : 0.0;
  const detail::CellBinner binner(grid);
  const std::size_t n = pack.size();

  for (std::size_t i = 0; i < n; ++i) {
    const double dx = pack.px[i] - ox;
    const double dy = pack.py[i] - oy;
    const double dz = pack.pz[i] - oz;
    const double rz = r20 * dx + r21 * dy + r22 * dz;
    if (!(rz > 0.0)) continue;  // at or below the pose horizon
    if (range2 > 0.0 && dx * dx + dy * dy + dz * dz > range2) continue;
    const double rx = r00 * dx + r01 * dy + r02 * dz;
    const double ry = r10 * dx + r11 * dy + r12 * dz;
    scratch.members[binner.bin(rx, ry, rz)].push_back(pack.delta[i]);
  }

  for (std::size_t c = 0; c < scratch.members.size(); ++c) {
    auto& m = scratch.members[c];
    if (m.empty()) continue;
    out.counts[c] = static_cast<std::uint32_t>(m.size());
    const std::size_t mid = (m.size() - 1) / 2;  // lower of two middles
    std::nth_element(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(mid), m.end());
    out.delta_med[c] = m[mid];
  }
}

inline SkyHistogram build_histogram(const ReceiverPose& pose, const FeatureCloud& features,
                                    const SkyGrid& grid = {}, double max_range = 0.0) {
  SkyHistogram out(grid);
  HistogramScratch scratch;
  const FeaturePack pack = pack_features(features);
  build_histogram_into(pose, pack, grid, max_range, scratch, out);
  return out;
}

/// b = 1 marks cells the model treats as unoccupied: strictly fewer than
/// m_occ points.
inline std::vector<std::uint8_t> binary_mask(const SkyHistogram& histogram, int m_occ) {
  if (m_occ < 1) fail(errc::invalid_config, "m_occ must be >= 1");
  std::vector<std::uint8_t> b(histogram.counts.size());
  for (std::size_t c = 0; c < b.size(); ++c)
    b[c] = histogram.counts[c] < static_cast<std::uint32_t>(m_occ) ? 1 : 0;
  return b;
}

/// v_hat plus the per-cell diagnostics behind it. p is NaN where m = 0 (the
/// mask makes it irrelevant there).
struct Prediction {
  double v_hat = 0.0;
  std::vector<double> factor;  // max(p, b) per cell
  std::vector<double> p;
  std::vector<std::uint8_t> b;
};

inline Prediction predict(const SkyMap& sky_map, const SkyHistogram& histogram,
                          const ReductionParams& params = {}) {
  params.validate();
  if (!(sky_map.grid == histogram.grid))
    fail(errc::grid_mismatch, "sky map and histogram use different grids");

  Prediction out;
  const std::size_t n = sky_map.cells.size();
  out.factor.resize(n);
  out.p.resize(n, std::numeric_limits<double>::quiet_NaN());
  out.b = binary_mask(histogram, params.m_occ);
  double v = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    double factor = 1.0;
    if (histogram.counts[c] > 0) {
      const double p = reduction(histogram.delta_med[c], histogram.counts[c], params);
      out.p[c] = p;
      factor = out.b[c] ? 1.0 : p;
    }
    out.factor[c] = factor;
    v += sky_map.cells[c] * factor;
  }
  out.v_hat = v;
  return out;
}

/// Line-of-sight baseline: a single point in a cell blocks it outright.
inline double predict_baseline(const SkyMap& sky_map, const SkyHistogram& histogram) {
  if (!(sky_map.grid == histogram.grid))
    fail(errc::grid_mismatch, "sky map and histogram use different grids");
  double v = 0.0;
  for (std::size_t c = 0; c < sky_map.cells.size(); ++c)
    if (histogram.counts[c] == 0) v += sky_map.cells[c];
  return v;
}

struct VisibilityMap {
  GroundSet ground;
  std::vector<double> v_hat;      // per pose
  std::vector<double> v_hat_los;  // baseline per pose
  double snapshot_time = 0.0;
};

/// Runs build_histogram + predict (and the baseline) for every ground pose.
/// Poses are independent; results land in per-pose slots, so the output does
/// not depend on the thread count.
inline VisibilityMap visibility_map(const GroundSet& ground, const FeatureCloud& features,
                                    const SkyMap& sky_map, const ReductionParams& params = {},
                                    double max_range = 0.0, unsigned threads = 0) {
  params.validate();
  sky_map.grid.validate();

  VisibilityMap out;
  out.ground = ground;
  out.v_hat.resize(ground.poses.size());
  out.v_hat_los.resize(ground.poses.size());

  const FeaturePack pack = pack_features(features);
  const unsigned n_threads = threads == 0 ? thread_budget() : threads;
  std::vector<HistogramScratch> scratch(n_threads);
  std::vector<SkyHistogram> hist(n_threads, SkyHistogram(sky_map.grid));

  parallel_for(
      ground.poses.size(),
      [&](std::size_t i, unsigned tid) {
        build_histogram_into(ground.poses[i], pack, sky_map.grid, max_range, scratch[tid],
                             hist[tid]);
        out.v_hat[i] = predict(sky_map, hist[tid], params).v_hat;
        out.v_hat_los[i] = predict_baseline(sky_map, hist[tid]);
      },
      n_threads);
  return out;
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

/// One training observation: the hemisphere statistics at a pose, the sky map
/// in force at that instant, and the measured viable count.
struct CalibrationSample {
  SkyHistogram histogram;
  SkyMap sky_map;
  double measured_v = 0.0;
};

/// Candidate values per axis; the occupancy threshold is not searched.
struct CalibrationGrid {
  std::vector<double> alpha{4.0};
  std::vector<double> beta{0.25};
  std::vector<double> gamma{1e-10};
  int m_occ = 5;
};

namespace detail {

// Cells where the mask already decides the factor contribute a constant;
// only unmasked occupied cells depend on (alpha, beta, gamma).
struct CompiledSample {
  double base = 0.0;
  std::vector<double> s, dmed, m;
  double truth = 0.0;
};

inline CompiledSample compile_sample(const CalibrationSample& sample, int m_occ) {
  if (!(sample.sky_map.grid == sample.histogram.grid))
    fail(errc::grid_mismatch, "calibration sample mixes grids");
  CompiledSample out;
  out.truth = sample.measured_v;
  for (std::size_t c = 0; c < sample.sky_map.cells.size(); ++c) {
    const double s = sample.sky_map.cells[c];
    const std::uint32_t m = sample.histogram.counts[c];
    if (m < static_cast<std::uint32_t>(m_occ)) {
      out.base += s;  // b = 1, factor = 1
    } else if (s != 0.0) {
      out.s.push_back(s);
      out.dmed.push_back(sample.histogram.delta_med[c]);
      out.m.push_back(static_cast<double>(m));
    }
  }
  return out;
}

}  // namespace detail

/// Mean absolute error of the model against the measured counts.
inline double calibration_mae(const std::vector<CalibrationSample>& samples,
                              const ReductionParams& params) {
  if (samples.empty()) fail(errc::empty_training_set, "no calibration samples");
  params.validate();
  double abs_err = 0.0;
  for (const auto& sample : samples) {
    const detail::CompiledSample cs = detail::compile_sample(sample, params.m_occ);
    double v = cs.base;
    for (std::size_t k = 0; k < cs.s.size(); ++k)
      v += cs.s[k] * reduction(cs.dmed[k], cs.m[k], params);
    abs_err += std::abs(v - cs.truth);
  }
  return abs_err / static_cast<double>(samples.size());
}

/// Exhaustive grid search minimizing mean absolute error of v_hat against the
/// measured counts. Exact ties go to the candidate closest to the stock
/// parameters (scaled squared distance, gamma on a log axis).
inline ReductionParams calibrate(const std::vector<CalibrationSample>& samples,
                                 const CalibrationGrid& grid) {
  if (samples.empty()) fail(errc::empty_training_set, "no calibration samples");
  if (grid.alpha.empty() || grid.beta.empty() || grid.gamma.empty())
    fail(errc::invalid_config, "calibration grid has an empty axis");
  if (grid.m_occ < 1) fail(errc::invalid_config, "m_occ must be >= 1");

  std::vector<detail::CompiledSample> compiled;
  compiled.reserve(samples.size());
  for (const auto& sample : samples) compiled.push_back(detail::compile_sample(sample, grid.m_occ));

  const ReductionParams defaults{};
  const double log_gamma_default = std::log10(defaults.gamma);
  auto default_distance = [&](const ReductionParams& c) {
    const double da = (c.alpha - defaults.alpha) / defaults.alpha;
    const double db = c.beta - defaults.beta;
    const double dg = c.gamma > 0.0 && defaults.gamma > 0.0
                          ? (std::log10(c.gamma) - log_gamma_default) / 10.0
                          : (c.gamma == defaults.gamma ? 0.0 : 1.0);
    return da * da + db * db + dg * dg;
  };

  ReductionParams best;
  double best_mae = std::numeric_limits<double>::infinity();
  double best_dist = std::numeric_limits<double>::infinity();
  bool first = true;

  for (double alpha : grid.alpha)
    for (double beta : grid.beta)
      for (double gamma : grid.gamma) {
        ReductionParams candidate{alpha, beta, gamma, grid.m_occ};
        candidate.validate();
        double abs_err = 0.0;
        for (const auto& cs : compiled) {
          double v = cs.base;
          for (std::size_t k = 0; k < cs.s.size(); ++k)
            v += cs.s[k] * reduction(cs.dmed[k], cs.m[k], candidate);
          abs_err += std::abs(v - cs.truth);
        }
        const double mae = abs_err / static_cast<double>(compiled.size());
        const double dist = default_distance(candidate);
        if (first || mae < best_mae || (mae == best_mae && dist < best_dist)) {
          best = candidate;
          best_mae = mae;
          best_dist = dist;
          first = false;
        }
      }
  return best;
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

inline void write_visibility_csv(std::ostream& out, const VisibilityMap& vis,
                                 bool baseline = false) {
  const std::vector<double>& values = baseline ? vis.v_hat_los : vis.v_hat;
  out << "x,y,z,v_hat\n";
  char buf[128];
  for (std::size_t i = 0; i < vis.ground.poses.size(); ++i) {
    const Vec3& p = vis.ground.poses[i].position;
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", p.x, p.y, p.z, values[i]);
    out << buf;
  }
}

inline void write_visibility_ply(const std::string& path, const VisibilityMap& vis,
                                 bool binary = true, bool baseline = false) {
  ply::VertexTable table;
  const char* names[4] = {"x", "y", "z", "v_hat"};
  table.properties.resize(4);
  for (int c = 0; c < 4; ++c) {
    table.properties[c].name = names[c];
    table.properties[c].type = c < 3 ? ply::Scalar::Float64 : ply::Scalar::Float32;
    table.properties[c].values.reserve(vis.ground.poses.size());
  }
  const std::vector<double>& values = baseline ? vis.v_hat_los : vis.v_hat;
  for (std::size_t i = 0; i < vis.ground.poses.size(); ++i) {
    const Vec3& p = vis.ground.poses[i].position;
    table.properties[0].values.push_back(p.x);
    table.properties[1].values.push_back(p.y);
    table.properties[2].values.push_back(p.z);
    table.properties[3].values.push_back(values[i]);
  }
  table.count = vis.ground.poses.size();
  ply::write(path, table, binary);
}

/// Long-form per-cell diagnostics for one pose (Fig.-4-style panels).
inline void write_prediction_cells_csv(std::ostream& out, const SkyMap& sky_map,
                                       const SkyHistogram& histogram,
                                       const Prediction& prediction) {
  out << "az_index,el_index,az_center,el_center,s,m,delta_med,p,b,factor\n";
  char buf[256];
  const int naz = sky_map.grid.n_az();
  const int nel = sky_map.grid.n_el();
  for (int j = 0; j < nel; ++j)
    for (int i = 0; i < naz; ++i) {
      const std::size_t c = sky_map.grid.flat(i, j);
      std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g,%.17g,%u,%.17g,%.17g,%d,%.17g\n", i, j,
                    sky_map.grid.az_center(i), sky_map.grid.el_center(j), sky_map.cells[c],
                    histogram.counts[c], histogram.delta_med[c], prediction.p[c],
                    static_cast<int>(prediction.b[c]), prediction.factor[c]);
      out << buf;
    }
}

}  // namespace skyshade
