#pragma once

#include <fstream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "skyshade/error.hpp"
#include "skyshade/eval.hpp"
#include "skyshade/features.hpp"
#include "skyshade/ground.hpp"
#include "skyshade/predictor.hpp"
#include "skyshade/sky_model.hpp"

namespace skyshade {

/// Every pipeline parameter with its stock default. JSON round-trips through
/// save_config/load_config; absent keys keep defaults and are reported.
struct Config {
  // satellite kernel / sky grid
  double sigma_deg = 12.5;
  double az_step_deg = 7.5;
  double el_step_deg = 9.0;
  // map filtering + features
  double d_box = 0.1;
  int k_nn = 50;
  double d_nn = 0.25;
  // ground segmentation
  double delta_ground = -0.6;
  double epsilon_deg = 10.0;
  double h_ant = 1.0;
  // reduction model
  double alpha = 4.0;
  double beta = 0.25;
  double gamma = 1e-10;
  int m_occ = 5;
  // receiver settings
  double elevation_mask_deg = 15.0;
  double snr_cutoff_db = 35.0;
  // log handling
  double merge_window_s = 2.0;
  double max_gap_s = 5.0;
  // prediction / evaluation plumbing
  double max_range = 0.0;  // 0 = unlimited
  int fit_degree = 2;
  double assoc_radius_m = 2.0;
  double window_m = 5.0;
  int stride = 1;
  std::optional<GeoOrigin> origin;

  SkyGrid grid() const { return SkyGrid{az_step_deg, el_step_deg}; }
  FeatureParams feature_params() const { return {k_nn, d_nn}; }
  GroundParams ground_params() const { return {delta_ground, epsilon_deg, h_ant}; }
  ReductionParams reduction_params() const { return {alpha, beta, gamma, m_occ}; }
  SatelliteKernelParams kernel_params() const { return {sigma_deg}; }

  void validate() const {
    auto check = [](bool ok, const std::string& msg) {
      if (!ok) fail(errc::invalid_config, msg);
    };
    check(sigma_deg > 0.0, "sigma_deg must be > 0");
    grid().validate();  // az/el steps must divide 360 / 90 evenly
    check(d_box > 0.0, "d_box must be > 0");
    check(k_nn >= 2, "k_nn must be >= 2");
    check(d_nn > 0.0, "d_nn must be > 0");
    check(delta_ground >= -1.0 && delta_ground <= 1.0, "delta_ground must lie in [-1, 1]");
    check(epsilon_deg > 0.0 && epsilon_deg < 90.0, "epsilon_deg must lie in (0, 90)");
    check(h_ant > 0.0, "h_ant must be > 0");
    reduction_params().validate();  // alpha > 0, beta in [-1, 1], gamma >= 0, m_occ >= 1
    check(elevation_mask_deg >= 0.0 && elevation_mask_deg < 90.0,
          "elevation_mask_deg must lie in [0, 90)");
    check(snr_cutoff_db >= 0.0, "snr_cutoff_db must be >= 0");
    check(merge_window_s > 0.0, "merge_window_s must be > 0");
    check(max_gap_s > 0.0, "max_gap_s must be > 0");
    check(max_range >= 0.0, "max_range must be >= 0");
    check(fit_degree >= 0, "fit_degree must be >= 0");
    check(assoc_radius_m > 0.0, "assoc_radius_m must be > 0");
    check(window_m > 0.0, "window_m must be > 0");
    check(stride >= 1, "stride must be >= 1");
  }
};

namespace detail {

template <typename T>
void take(const nlohmann::json& j, const char* key, T& into, std::vector<std::string>* defaulted) {
  if (!j.contains(key)) {
    if (defaulted) defaulted->push_back(key);
    return;
  }
  try {
    into = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(errc::invalid_config, std::string("config field '") + key + "' has the wrong type");
  }
}

}  // namespace detail

inline nlohmann::json to_json(const Config& c) {
  nlohmann::json j{{"sigma_deg", c.sigma_deg},
                   {"az_step_deg", c.az_step_deg},
                   {"el_step_deg", c.el_step_deg},
                   {"d_box", c.d_box},
                   {"k_nn", c.k_nn},
                   {"d_nn", c.d_nn},
                   {"delta_ground", c.delta_ground},
                   {"epsilon_deg", c.epsilon_deg},
                   {"h_ant", c.h_ant},
                   {"alpha", c.alpha},
                   {"beta", c.beta},
                   {"gamma", c.gamma},
                   {"m_occ", c.m_occ},
                   {"elevation_mask_deg", c.elevation_mask_deg},
                   {"snr_cutoff_db", c.snr_cutoff_db},
                   {"merge_window_s", c.merge_window_s},
                   {"max_gap_s", c.max_gap_s},
                   {"max_range", c.max_range},
                   {"fit_degree", c.fit_degree},
                   {"assoc_radius_m", c.assoc_radius_m},
                   {"window_m", c.window_m},
                   {"stride", c.stride}};
  if (c.origin)
    j["origin"] = {{"lat", c.origin->latitude}, {"lon", c.origin->longitude}};
  else
    j["origin"] = nullptr;
  return j;
}

/// Unknown keys are rejected (they are almost always typos of real ones).
inline Config config_from_json(const nlohmann::json& j,
                               std::vector<std::string>* defaulted = nullptr) {
  if (!j.is_object()) fail(errc::invalid_config, "config root must be a JSON object");
  static const char* known[] = {
      "sigma_deg",   "az_step_deg",        "el_step_deg",   "d_box",
      "k_nn",        "d_nn",               "delta_ground",  "epsilon_deg",
      "h_ant",       "alpha",              "beta",          "gamma",
      "m_occ",       "elevation_mask_deg", "snr_cutoff_db", "merge_window_s",
      "max_gap_s",   "max_range",          "fit_degree",    "assoc_radius_m",
      "window_m",    "stride",             "origin"};
  for (const auto& [key, value] : j.items()) {
    bool found = false;
    for (const char* k : known) found = found || key == k;
    if (!found) fail(errc::invalid_config, "unknown config field '" + key + "'");
  }

  Config c;
  detail::take(j, "sigma_deg", c.sigma_deg, defaulted);
  detail::take(j, "az_step_deg", c.az_step_deg, defaulted);
  detail::take(j, "el_step_deg", c.el_step_deg, defaulted);
  detail::take(j, "d_box", c.d_box, defaulted);
  detail::take(j, "k_nn", c.k_nn, defaulted);
  detail::take(j, "d_nn", c.d_nn, defaulted);
  detail::take(j, "delta_ground", c.delta_ground, defaulted);
  detail::take(j, "epsilon_deg", c.epsilon_deg, defaulted);
  detail::take(j, "h_ant", c.h_ant, defaulted);
  detail::take(j, "alpha", c.alpha, defaulted);
  detail::take(j, "beta", c.beta, defaulted);
  detail::take(j, "gamma", c.gamma, defaulted);
  detail::take(j, "m_occ", c.m_occ, defaulted);
  detail::take(j, "elevation_mask_deg", c.elevation_mask_deg, defaulted);
  detail::take(j, "snr_cutoff_db", c.snr_cutoff_db, defaulted);
  detail::take(j, "merge_window_s", c.merge_window_s, defaulted);
  detail::take(j, "max_gap_s", c.max_gap_s, defaulted);
  detail::take(j, "max_range", c.max_range, defaulted);
  detail::take(j, "fit_degree", c.fit_degree, defaulted);
  detail::take(j, "assoc_radius_m", c.assoc_radius_m, defaulted);
  detail::take(j, "window_m", c.window_m, defaulted);
  detail::take(j, "stride", c.stride, defaulted);

  if (j.contains("origin") && !j.at("origin").is_null()) {
    const auto& o = j.at("origin");
    if (!o.is_object() || !o.contains("lat") || !o.contains("lon"))
      fail(errc::invalid_config, "config field 'origin' needs {lat, lon}");
    GeoOrigin origin;
    detail::take(o, "lat", origin.latitude, nullptr);
    detail::take(o, "lon", origin.longitude, nullptr);
    c.origin = origin;
  } else if (!j.contains("origin") && defaulted) {
    defaulted->push_back("origin");
  }

  c.validate();
  return c;
}

inline Config load_config(const std::string& path, std::vector<std::string>* defaulted = nullptr) {
  std::ifstream in(path);
  if (!in) fail(errc::io_failure, "cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(errc::invalid_config, "config '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j, defaulted);
}

inline void save_config(const std::string& path, const Config& c) {
  std::ofstream out(path);
  if (!out) fail(errc::io_failure, "cannot write config '" + path + "'");
  out << to_json(c).dump(2) << '\n';
}

/// Parses a "<az>x<el>" grid spec like "7.5x9".
inline SkyGrid parse_grid_spec(const std::string& spec) {
  const auto x = spec.find('x');
  if (x == std::string::npos || x == 0 || x + 1 >= spec.size())
    fail(errc::invalid_config, "grid spec must look like '7.5x9', got '" + spec + "'");
  std::size_t used_az = 0, used_el = 0;
  double az = 0.0, el = 0.0;
  try {
    az = std::stod(spec.substr(0, x), &used_az);
    el = std::stod(spec.substr(x + 1), &used_el);
  } catch (const std::exception&) {
    fail(errc::invalid_config, "grid spec must look like '7.5x9', got '" + spec + "'");
  }
  if (used_az != x || used_el != spec.size() - x - 1)
    fail(errc::invalid_config, "grid spec must look like '7.5x9', got '" + spec + "'");
  return SkyGrid{az, el};
}

}  // namespace skyshade
