#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "skyshade/error.hpp"
#include "skyshade/geometry.hpp"
#include "skyshade/kdtree.hpp"
#include "skyshade/nmea.hpp"
#include "skyshade/predictor.hpp"

namespace skyshade {

/// One trajectory point with measured and predicted counts.
struct TrajectorySample {
  double arc_length = 0.0;  // meters along the fix sequence
  Vec3 position;
  double v = 0.0;
  double v_hat = 0.0;
  double v_hat_baseline = 0.0;
};

inline void require_series(const std::vector<TrajectorySample>& series) {
  if (series.empty()) fail(errc::empty_series, "trajectory series is empty");
  for (std::size_t i = 1; i < series.size(); ++i)
    if (series[i].arc_length < series[i - 1].arc_length)
      fail(errc::invalid_config, "series not sorted by arc_length");
}

/// Windowed mean/std of the measured count (population std), plus windowed
/// means of the predictions for plots that want both smoothed and raw curves.
struct SmoothedSample {
  double arc_length = 0.0;
  double v_mean = 0.0;
  double v_std = 0.0;
  double v_hat = 0.0;           // raw prediction at this sample
  double v_hat_baseline = 0.0;  // raw baseline at this sample
  double v_hat_mean = 0.0;
  double v_hat_baseline_mean = 0.0;
};

/// Centered arc-length window [l - w/2, l + w/2], bounds inclusive.
inline std::vector<SmoothedSample> windowed_stats(const std::vector<TrajectorySample>& series,
                                                  double window_m = 5.0) {
  require_series(series);
  if (!(window_m > 0.0)) fail(errc::invalid_config, "window must be > 0");

  const double half = window_m / 2.0;
  std::vector<SmoothedSample> out(series.size());
  std::size_t lo = 0, hi = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double center = series[i].arc_length;
    while (lo < series.size() && series[lo].arc_length < center - half) ++lo;
    if (hi < lo) hi = lo;
    while (hi < series.size() && series[hi].arc_length <= center + half) ++hi;

    const double k = static_cast<double>(hi - lo);
    double sv = 0.0, sh = 0.0, sb = 0.0;
    for (std::size_t j = lo; j < hi; ++j) {
      sv += series[j].v;
      sh += series[j].v_hat;
      sb += series[j].v_hat_baseline;
    }
    const double mean = sv / k;
    double var = 0.0;
    for (std::size_t j = lo; j < hi; ++j) {
      const double d = series[j].v - mean;
      var += d * d;
    }
    out[i] = {center,  mean,   std::sqrt(var / k), series[i].v_hat, series[i].v_hat_baseline,
              sh / k,  sb / k};
  }
  return out;
}

/// Weighted least-squares polynomial v_hat ~ f(v); coefficients ascending
/// (constant first). mse is the weighted mean squared residual.
struct PolynomialFit {
  std::vector<double> coeffs;
  double mse = 0.0;
};

struct FitSample {
  double v = 0.0;
  double v_hat = 0.0;
  double weight = 1.0;
};

inline PolynomialFit fit_relation(const std::vector<FitSample>& samples, int degree) {
  if (degree < 0) fail(errc::invalid_config, "degree must be >= 0");
  if (samples.empty()) fail(errc::empty_series, "no fit samples");
  std::set<double> distinct;
  double weight_sum = 0.0;
  for (const auto& s : samples) {
    if (!(s.weight > 0.0)) fail(errc::invalid_config, "fit weights must be > 0");
    distinct.insert(s.v);
    weight_sum += s.weight;
  }
  if (static_cast<int>(distinct.size()) < degree + 1)
    fail(errc::rank_deficient, "need " + std::to_string(degree + 1) +
                                   " distinct v values, have " + std::to_string(distinct.size()));

  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  const Eigen::Index cols = degree + 1;
  Eigen::MatrixXd a(n, cols);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sw = std::sqrt(samples[static_cast<std::size_t>(i)].weight);
    double pow_v = 1.0;
    for (Eigen::Index c = 0; c < cols; ++c) {
      a(i, c) = sw * pow_v;
      pow_v *= samples[static_cast<std::size_t>(i)].v;
    }
    y(i) = sw * samples[static_cast<std::size_t>(i)].v_hat;
  }

  const Eigen::VectorXd x = a.colPivHouseholderQr().solve(y);
  PolynomialFit fit;
  fit.coeffs.assign(x.data(), x.data() + cols);

  double sse = 0.0;
  for (const auto& s : samples) {
    double f = 0.0, pow_v = 1.0;
    for (double c : fit.coeffs) {
      f += c * pow_v;
      pow_v *= s.v;
    }
    const double r = f - s.v_hat;
    sse += s.weight * r * r;
  }
  fit.mse = sse / weight_sum;
  return fit;
}

struct EvalReport {
  double mae = 0.0;
  double rmse = 0.0;
  double mean_bias = 0.0;  // mean(v_hat - v)
  double baseline_mae = 0.0;
  std::vector<double> fit_coeffs;
  double fit_mse = 0.0;
  std::size_t n_samples = 0;
  int fit_degree = 0;
};

/// Error metrics plus the v-vs-v_hat polynomial fit. The requested degree is
/// lowered to (distinct v values - 1) when the series cannot support it, so
/// short or constant series still evaluate.
inline EvalReport evaluate(const std::vector<TrajectorySample>& series, int fit_degree = 2) {
  require_series(series);
  if (fit_degree < 0) fail(errc::invalid_config, "fit degree must be >= 0");

  EvalReport report;
  report.n_samples = series.size();
  const double n = static_cast<double>(series.size());
  double abs_err = 0.0, sq_err = 0.0, bias = 0.0, base_err = 0.0;
  std::set<double> distinct;
  std::vector<FitSample> fit_samples;
  fit_samples.reserve(series.size());
  for (const auto& s : series) {
    const double e = s.v_hat - s.v;
    abs_err += std::abs(e);
    sq_err += e * e;
    bias += e;
    base_err += std::abs(s.v_hat_baseline - s.v);
    distinct.insert(s.v);
    fit_samples.push_back({s.v, s.v_hat, 1.0});
  }
  report.mae = abs_err / n;
  report.rmse = std::sqrt(sq_err / n);
  report.mean_bias = bias / n;
  report.baseline_mae = base_err / n;

  report.fit_degree = std::min(fit_degree, static_cast<int>(distinct.size()) - 1);
  const PolynomialFit fit = fit_relation(fit_samples, report.fit_degree);
  report.fit_coeffs = fit.coeffs;
  report.fit_mse = fit.mse;
  return report;
}

// ---------------------------------------------------------------------------
// Geo association
// ---------------------------------------------------------------------------

struct GeoOrigin {
  double latitude = 0.0;
  double longitude = 0.0;
};

constexpr double kEarthRadius = 6378137.0;  // WGS84 equatorial, meters

/// Local tangent-plane ENU around the origin; adequate below a few km.
inline Vec3 enu_from_geodetic(double lat_deg, double lon_deg, const GeoOrigin& origin) {
  const double x =
      deg2rad(lon_deg - origin.longitude) * std::cos(deg2rad(origin.latitude)) * kEarthRadius;
  const double y = deg2rad(lat_deg - origin.latitude) * kEarthRadius;
  return {x, y, 0.0};
}

struct AssociationResult {
  std::vector<TrajectorySample> samples;
  std::vector<std::size_t> pose_indices;  // matched pose per sample
  std::vector<std::size_t> fix_indices;   // matched fix per sample
  std::size_t dropped = 0;                // fixes with no pose within the radius
};

/// Converts each fix to ENU and matches it to the nearest visibility-map pose
/// in the horizontal plane. Arc length accumulates over the whole fix
/// sequence, so dropped fixes still advance it.
inline AssociationResult associate(const std::vector<nmea::GroundTruthSample>& fixes,
                                   const VisibilityMap& vis,
                                   const std::optional<GeoOrigin>& origin,
                                   double radius_m = 2.0) {
  if (!origin) fail(errc::missing_georeference, "ENU origin (lat/lon) required");
  if (!(radius_m > 0.0)) fail(errc::invalid_config, "association radius must be > 0");

  std::vector<Vec3> flat;
  flat.reserve(vis.ground.poses.size());
  for (const auto& pose : vis.ground.poses)
    flat.push_back({pose.position.x, pose.position.y, 0.0});

  AssociationResult out;
  if (fixes.empty()) return out;
  if (flat.empty()) {
    out.dropped = fixes.size();
    return out;
  }
  const KdTree index(std::move(flat));

  double arc = 0.0;
  Vec3 prev;
  for (std::size_t i = 0; i < fixes.size(); ++i) {
    const Vec3 p = enu_from_geodetic(fixes[i].latitude, fixes[i].longitude, *origin);
    if (i > 0) arc += (p - prev).norm();
    prev = p;

    const auto nearest = index.knn(p, 1);
    if (nearest.empty() || nearest[0].distance > radius_m) {
      ++out.dropped;
      continue;
    }
    const std::size_t j = nearest[0].index;
    out.samples.push_back({arc, vis.ground.poses[j].position, static_cast<double>(fixes[i].viable),
                           vis.v_hat[j], vis.v_hat_los[j]});
    out.pose_indices.push_back(j);
    out.fix_indices.push_back(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exports
// ---------------------------------------------------------------------------

inline void write_series_csv(std::ostream& out, const std::vector<SmoothedSample>& series) {
  out << "arc_length,v_mean,v_std,v_hat,v_hat_baseline\n";
  char buf[192];
  for (const auto& s : series) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", s.arc_length, s.v_mean,
                  s.v_std, s.v_hat, s.v_hat_baseline);
    out << buf;
  }
}

inline void write_truth_csv(std::ostream& out, const std::vector<nmea::GroundTruthSample>& fixes) {
  out << "utc_time,lat,lon,v\n";
  char buf[160];
  for (const auto& f : fixes) {
    std::snprintf(buf, sizeof buf, "%.3f,%.9f,%.9f,%d\n", f.utc_time, f.latitude, f.longitude,
                  f.viable);
    out << buf;
  }
}

}  // namespace skyshade
