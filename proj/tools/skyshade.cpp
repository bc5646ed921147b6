// skyshade command-line front end: composable pipeline stages communicating
// through PLY/CSV/JSON files. Errors leave as one-line JSON on stderr.

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "skyshade/skyshade.hpp"

namespace {

using nlohmann::json;
using namespace skyshade;

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

Config load_config_or_default(const std::string& path) {
  if (path.empty()) return Config{};
  std::vector<std::string> defaulted;
  Config config = load_config(path, &defaulted);
  if (!defaulted.empty()) {
    std::cerr << "config: using defaults for";
    for (const auto& key : defaulted) std::cerr << ' ' << key;
    std::cerr << '\n';
  }
  return config;
}

std::vector<nmea::RawSentence> read_log_file(const std::string& path, nmea::LogStats& stats) {
  std::ifstream in(path);
  if (!in) fail(errc::io_failure, "cannot open log '" + path + "'");
  return nmea::read_log(in, stats);
}

void report_log_stats(const std::string& path, const nmea::LogStats& stats) {
  std::cerr << path << ": " << stats.accepted << '/' << stats.lines << " sentences accepted ("
            << stats.checksum_failures << " bad checksums, " << stats.malformed << " malformed, "
            << stats.skipped_unknown_type << " other types, " << stats.incomplete_groups
            << " incomplete groups)\n";
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(errc::io_failure, "cannot open '" + path + "' for writing");
  return out;
}

GroundSet apply_stride(GroundSet ground, int stride) {
  if (stride <= 1) return ground;
  GroundSet thinned;
  thinned.params = ground.params;
  for (std::size_t i = 0; i < ground.poses.size(); i += static_cast<std::size_t>(stride))
    thinned.poses.push_back(ground.poses[i]);
  return thinned;
}

GeoOrigin parse_origin(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos)
    fail(errc::invalid_config, "origin must be 'lat,lon', got '" + text + "'");
  try {
    return {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
  } catch (const std::exception&) {
    fail(errc::invalid_config, "origin must be 'lat,lon', got '" + text + "'");
  }
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> values;
  std::stringstream in(text);
  std::string token;
  while (std::getline(in, token, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      fail(errc::invalid_config, std::string(what) + " must be a comma list of numbers");
    }
  }
  if (values.empty()) fail(errc::invalid_config, std::string(what) + " list is empty");
  return values;
}

// Options every prediction-flavored subcommand shares, layered over a config
// file when the flag was actually given.
struct ModelFlags {
  std::optional<double> sigma, alpha, beta, gamma, elevation_mask, snr_cutoff, merge_window,
      max_range, h_ant;
  std::optional<int> m_occ;
  std::optional<std::string> grid;
  int stride = 1;
  unsigned threads = 0;

  void attach(CLI::App* cmd, bool with_model = true) {
    cmd->add_option("--sigma-deg", sigma, "satellite kernel width, degrees");
    cmd->add_option("--grid", grid, "sky grid as '<az>x<el>' degrees, e.g. 7.5x9");
    cmd->add_option("--elevation-mask", elevation_mask, "receiver elevation mask, degrees");
    cmd->add_option("--snr-cutoff", snr_cutoff, "viability SNR cutoff, dB");
    cmd->add_option("--merge-window", merge_window, "snapshot merge window, seconds");
    if (with_model) {
      cmd->add_option("--alpha", alpha, "sigmoid slope");
      cmd->add_option("--beta", beta, "sigmoid transition");
      cmd->add_option("--gamma", gamma, "absorption coefficient");
      cmd->add_option("--m-occ", m_occ, "occupancy threshold, points");
      cmd->add_option("--max-range", max_range, "max contributing point range, m (0 = unlimited)");
      cmd->add_option("--h-ant", h_ant, "antenna height above ground, m");
      cmd->add_option("--stride", stride, "keep every Nth ground pose");
      cmd->add_option("--threads", threads, "worker threads (0 = auto)");
    }
  }

  void apply(Config& config) const {
    if (sigma) config.sigma_deg = *sigma;
    if (grid) {
      const SkyGrid g = parse_grid_spec(*grid);
      config.az_step_deg = g.az_step_deg;
      config.el_step_deg = g.el_step_deg;
    }
    if (elevation_mask) config.elevation_mask_deg = *elevation_mask;
    if (snr_cutoff) config.snr_cutoff_db = *snr_cutoff;
    if (merge_window) config.merge_window_s = *merge_window;
    if (alpha) config.alpha = *alpha;
    if (beta) config.beta = *beta;
    if (gamma) config.gamma = *gamma;
    if (m_occ) config.m_occ = *m_occ;
    if (max_range) config.max_range = *max_range;
    if (h_ant) config.h_ant = *h_ant;
    config.validate();
  }
};

// Log -> snapshots -> one sky map at the requested (or middle) time.
struct SkySelection {
  std::vector<nmea::ConstellationSnapshot> snapshots;
  std::size_t index = 0;
  SkyMap map;
};

SkySelection select_sky(const std::string& nmea_path, const std::string& time_spec,
                        const Config& config) {
  nmea::LogStats stats;
  const auto sentences = read_log_file(nmea_path, stats);
  report_log_stats(nmea_path, stats);

  SkySelection sel;
  sel.snapshots = nmea::build_snapshots(sentences, config.merge_window_s, stats,
                                        config.elevation_mask_deg, config.snr_cutoff_db);
  if (sel.snapshots.empty()) fail(errc::empty_series, "log produced no constellation snapshots");
  sel.index = time_spec.empty()
                  ? sel.snapshots.size() / 2
                  : nmea::select_snapshot(sel.snapshots, nmea::parse_time_of_day(time_spec),
                                          stats.day_rollovers);
  sel.map = build_sky_map(sel.snapshots[sel.index], config.grid(), config.kernel_params());
  return sel;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int run_filter(const std::string& in_path, const std::string& out_path, double voxel,
               bool ascii) {
  if (!(voxel > 0.0)) fail(errc::invalid_config, "d_box must be > 0");

  if (detail::sniff_format(in_path) != CloudFormat::XyzCsv) {
    // PLY: filter at the property-table level so extra columns pass through.
    ply::VertexTable table = ply::read(in_path);
    std::vector<Vec3> points(table.count);
    const ply::Property* x = table.find("x");
    const ply::Property* y = table.find("y");
    const ply::Property* z = table.find("z");
    for (std::size_t i = 0; i < table.count; ++i)
      points[i] = {x->values[i], y->values[i], z->values[i]};

    std::vector<std::size_t> kept = voxel_filter_indices(points, voxel);
    std::sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) {
      const Vec3 &p = points[a], &q = points[b];
      if (p.x != q.x) return p.x < q.x;
      if (p.y != q.y) return p.y < q.y;
      return p.z < q.z;
    });

    ply::VertexTable out;
    out.count = kept.size();
    out.properties.resize(table.properties.size());
    for (std::size_t c = 0; c < table.properties.size(); ++c) {
      out.properties[c].name = table.properties[c].name;
      out.properties[c].type = table.properties[c].type;
      out.properties[c].values.reserve(kept.size());
      for (std::size_t i : kept) out.properties[c].values.push_back(table.properties[c].values[i]);
    }
    ply::write(out_path, out, !ascii);
    std::cout << "filter: " << table.count << " -> " << kept.size() << " points (voxel " << voxel
              << " m)\n";
    return 0;
  }

  LoadReport report;
  const MapCloud cloud = load_cloud(in_path, CloudFormat::Auto, &report);
  if (report.dropped_non_finite)
    std::cerr << in_path << ": dropped " << report.dropped_non_finite << " non-finite rows\n";
  const MapCloud filtered = voxel_filter(cloud, voxel);
  save_cloud(out_path, filtered,
             ascii ? CloudFormat::PlyAscii : CloudFormat::Auto);
  std::cout << "filter: " << cloud.size() << " -> " << filtered.size() << " points (voxel "
            << voxel << " m)\n";
  return 0;
}

int run_features(const std::string& in_path, const std::string& out_path, const Config& config,
                 bool ascii) {
  LoadReport report;
  MapCloud cloud = load_cloud(in_path, CloudFormat::Auto, &report);
  if (report.dropped_non_finite)
    std::cerr << in_path << ": dropped " << report.dropped_non_finite << " non-finite rows\n";

  const KdTree index(cloud.points);
  const FeatureCloud features = compute_features(cloud, index, config.feature_params());
  save_features(out_path, features, !ascii);
  std::cout << "features: " << features.size() << " points, " << features.valid_count()
            << " valid (k_nn " << config.k_nn << ", d_nn " << config.d_nn << " m)\n";
  return 0;
}

int run_ground(const std::string& in_path, const std::string& out_path, const Config& config,
               int stride, bool ascii) {
  const FeatureCloud features = load_features(in_path);
  GroundSet ground = segment_ground(features, config.ground_params());
  ground = apply_stride(std::move(ground), stride);
  save_ground(out_path, ground, !ascii);
  std::cout << "ground: " << ground.poses.size() << " poses from " << features.size()
            << " points (delta < " << config.delta_ground << ", eps " << config.epsilon_deg
            << " deg, h_ant " << config.h_ant << " m)\n";
  return 0;
}

int run_skymap(const std::string& nmea_path, const std::string& time_spec,
               const std::string& out_path, const std::string& meta_path, const Config& config) {
  const SkySelection sel = select_sky(nmea_path, time_spec, config);
  const auto& snap = sel.snapshots[sel.index];

  auto out = open_out(out_path);
  write_sky_map_csv(out, sel.map);
  if (!meta_path.empty()) {
    json meta{{"az_step_deg", sel.map.grid.az_step_deg},
              {"el_step_deg", sel.map.grid.el_step_deg},
              {"n_az", sel.map.grid.n_az()},
              {"n_el", sel.map.grid.n_el()},
              {"sigma_deg", config.sigma_deg},
              {"utc_time", snap.utc_time},
              {"viable_count", snap.viable_count()},
              {"tracked_count", snap.tracked_count()},
              {"cell_sum", sel.map.sum()},
              {"snapshot_index", sel.index},
              {"snapshot_total", sel.snapshots.size()}};
    open_out(meta_path) << meta.dump(2) << '\n';
  }
  std::cout << "skymap: snapshot " << sel.index + 1 << '/' << sel.snapshots.size() << " at utc "
            << snap.utc_time << " s, " << snap.viable_count() << " viable of "
            << snap.tracked_count() << " tracked\n";
  return 0;
}

int run_predict(const std::string& map_path, const std::string& ground_path,
                const std::string& nmea_path, const std::string& time_spec,
                const std::string& out_csv, const std::string& out_ply,
                const std::string& cells_csv, std::size_t pose_index, const Config& config,
                int stride, unsigned threads, bool baseline) {
  const FeatureCloud features = load_features(map_path);
  GroundSet ground = load_ground(ground_path, config.h_ant);
  ground = apply_stride(std::move(ground), stride);
  if (ground.poses.empty()) fail(errc::empty_cloud, "ground set has no poses");

  const SkySelection sel = select_sky(nmea_path, time_spec, config);
  VisibilityMap vis = visibility_map(ground, features, sel.map, config.reduction_params(),
                                     config.max_range, threads);
  vis.snapshot_time = sel.snapshots[sel.index].utc_time;

  if (!out_csv.empty()) {
    auto out = open_out(out_csv);
    write_visibility_csv(out, vis, baseline);
  }
  if (!out_ply.empty()) write_visibility_ply(out_ply, vis, true, baseline);

  if (!cells_csv.empty()) {
    if (pose_index >= ground.poses.size())
      fail(errc::out_of_range, "pose index " + std::to_string(pose_index) + " of " +
                                   std::to_string(ground.poses.size()));
    const SkyHistogram hist =
        build_histogram(ground.poses[pose_index], features, sel.map.grid, config.max_range);
    const Prediction pred = predict(sel.map, hist, config.reduction_params());
    auto out = open_out(cells_csv);
    write_prediction_cells_csv(out, sel.map, hist, pred);
  }

  const auto& values = baseline ? vis.v_hat_los : vis.v_hat;
  double lo = values[0], hi = values[0], mean = 0.0;
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    mean += v;
  }
  mean /= static_cast<double>(values.size());
  std::cout << (baseline ? "baseline" : "predict") << ": " << ground.poses.size() << " poses, v="
            << sel.map.sum() << ", v_hat mean " << mean << " min " << lo << " max " << hi << '\n';
  return 0;
}

struct EvalPaths {
  std::string map, ground, nmea, rover, time, origin;
  std::string report, series, truth_out, vis_ply, vis_csv, vis_los_ply;
};

int run_eval(const EvalPaths& paths, const Config& config, int stride, unsigned threads) {
  nmea::LogStats rover_stats;
  const std::string rover_path = paths.rover.empty() ? paths.nmea : paths.rover;
  if (rover_path.empty()) fail(errc::invalid_config, "eval needs --nmea or --rover");
  const auto rover_log = read_log_file(rover_path, rover_stats);
  const auto truth =
      nmea::ground_truth_series(rover_log, rover_stats, config.merge_window_s, config.max_gap_s,
                                config.elevation_mask_deg, config.snr_cutoff_db);
  report_log_stats(rover_path, rover_stats);
  if (rover_stats.fixes_without_snapshot)
    std::cerr << rover_path << ": " << rover_stats.fixes_without_snapshot
              << " fixes without a snapshot within " << config.max_gap_s << " s\n";

  if (!paths.truth_out.empty()) {
    auto out = open_out(paths.truth_out);
    write_truth_csv(out, truth);
    std::cout << "eval: wrote " << truth.size() << " truth samples\n";
  }

  const bool want_prediction = !paths.report.empty() || !paths.series.empty() ||
                               !paths.vis_ply.empty() || !paths.vis_csv.empty() ||
                               !paths.vis_los_ply.empty();
  if (!want_prediction) {
    if (paths.truth_out.empty())
      fail(errc::invalid_config, "eval has nothing to do; pass --report, --series or --truth-out");
    return 0;
  }
  if (paths.map.empty() || paths.ground.empty())
    fail(errc::invalid_config, "prediction outputs need --map and --ground");
  if (truth.empty()) fail(errc::empty_series, "rover log has no usable fixes");

  const FeatureCloud features = load_features(paths.map);
  GroundSet ground = load_ground(paths.ground, config.h_ant);
  ground = apply_stride(std::move(ground), stride);

  // Sky map at the requested time, or at the median fix time.
  nmea::LogStats base_stats;
  const auto base_log = read_log_file(paths.nmea, base_stats);
  const auto snapshots =
      nmea::build_snapshots(base_log, config.merge_window_s, base_stats,
                            config.elevation_mask_deg, config.snr_cutoff_db);
  if (snapshots.empty()) fail(errc::empty_series, "log produced no constellation snapshots");
  const std::size_t snap_index =
      paths.time.empty()
          ? nmea::select_snapshot(snapshots, truth[truth.size() / 2].utc_time, 0)
          : nmea::select_snapshot(snapshots, nmea::parse_time_of_day(paths.time),
                                  base_stats.day_rollovers);
  const SkyMap sky = build_sky_map(snapshots[snap_index], config.grid(), config.kernel_params());

  VisibilityMap vis =
      visibility_map(ground, features, sky, config.reduction_params(), config.max_range, threads);
  vis.snapshot_time = snapshots[snap_index].utc_time;

  if (!paths.vis_ply.empty()) write_visibility_ply(paths.vis_ply, vis);
  if (!paths.vis_los_ply.empty()) write_visibility_ply(paths.vis_los_ply, vis, true, true);
  if (!paths.vis_csv.empty()) {
    auto out = open_out(paths.vis_csv);
    write_visibility_csv(out, vis);
  }

  std::optional<GeoOrigin> origin = config.origin;
  if (!paths.origin.empty()) origin = parse_origin(paths.origin);

  const AssociationResult assoc = associate(truth, vis, origin, config.assoc_radius_m);
  if (assoc.dropped)
    std::cerr << "eval: " << assoc.dropped << " fixes beyond " << config.assoc_radius_m
              << " m of any pose\n";
  const EvalReport report = evaluate(assoc.samples, config.fit_degree);

  json j{{"mae", report.mae},
         {"rmse", report.rmse},
         {"mean_bias", report.mean_bias},
         {"baseline_mae", report.baseline_mae},
         {"fit_coeffs", report.fit_coeffs},
         {"fit_mse", report.fit_mse},
         {"fit_degree", report.fit_degree},
         {"n_samples", report.n_samples},
         {"dropped_fixes", assoc.dropped},
         {"snapshot_utc_time", vis.snapshot_time}};
  if (!paths.report.empty()) open_out(paths.report) << j.dump(2) << '\n';
  if (!paths.series.empty()) {
    auto out = open_out(paths.series);
    write_series_csv(out, windowed_stats(assoc.samples, config.window_m));
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

struct CalibrateArgs {
  std::string data, out;
  std::string alphas = "1,2,4,8,16";
  std::string betas = "-0.5,-0.25,0,0.25,0.5";
  std::string gammas = "1e-10";
};

int run_calibrate(const CalibrateArgs& args, Config config, unsigned threads) {
  std::ifstream in(args.data);
  if (!in) fail(errc::io_failure, "cannot open manifest '" + args.data + "'");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    fail(errc::invalid_config, std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!manifest.contains("trajectories") || !manifest["trajectories"].is_array() ||
      manifest["trajectories"].empty())
    fail(errc::invalid_config, "manifest needs a non-empty 'trajectories' array");

  std::vector<CalibrationSample> samples;
  for (const auto& entry : manifest["trajectories"]) {
    for (const char* key : {"map", "ground", "nmea"})
      if (!entry.contains(key) || !entry[key].is_string())
        fail(errc::invalid_config, std::string("trajectory entry needs string field '") + key +
                                       "'");
    const std::string map_path = entry["map"];
    const std::string ground_path = entry["ground"];
    const std::string base_path = entry["nmea"];
    const std::string rover_path = entry.value("rover", base_path);
    const std::string time_spec = entry.value("time", std::string());

    const FeatureCloud features = load_features(map_path);
    const GroundSet ground = load_ground(ground_path, config.h_ant);

    nmea::LogStats rover_stats;
    const auto rover_log = read_log_file(rover_path, rover_stats);
    const auto truth =
        nmea::ground_truth_series(rover_log, rover_stats, config.merge_window_s, config.max_gap_s,
                                  config.elevation_mask_deg, config.snr_cutoff_db);
    if (truth.empty()) fail(errc::empty_training_set, rover_path + " has no usable fixes");

    nmea::LogStats base_stats;
    const auto base_log = read_log_file(base_path, base_stats);
    const auto snapshots =
        nmea::build_snapshots(base_log, config.merge_window_s, base_stats,
                              config.elevation_mask_deg, config.snr_cutoff_db);
    if (snapshots.empty()) fail(errc::empty_series, base_path + " has no snapshots");
    const std::size_t snap_index =
        time_spec.empty()
            ? nmea::select_snapshot(snapshots, truth[truth.size() / 2].utc_time, 0)
            : nmea::select_snapshot(snapshots, nmea::parse_time_of_day(time_spec),
                                    base_stats.day_rollovers);
    const SkyMap sky = build_sky_map(snapshots[snap_index], config.grid(), config.kernel_params());

    VisibilityMap vis = visibility_map(ground, features, sky, config.reduction_params(),
                                       config.max_range, threads);
    const AssociationResult assoc = associate(truth, vis, config.origin, config.assoc_radius_m);
    if (assoc.samples.empty())
      fail(errc::empty_training_set, rover_path + " matched no poses; check origin and radius");

    // One histogram per distinct matched pose, shared across its fixes.
    const FeaturePack pack = pack_features(features);
    HistogramScratch scratch;
    std::map<std::size_t, SkyHistogram> cache;
    for (std::size_t k = 0; k < assoc.samples.size(); ++k) {
      const std::size_t j = assoc.pose_indices[k];
      auto it = cache.find(j);
      if (it == cache.end()) {
        SkyHistogram hist(sky.grid);
        build_histogram_into(ground.poses[j], pack, sky.grid, config.max_range, scratch, hist);
        it = cache.emplace(j, std::move(hist)).first;
      }
      samples.push_back({it->second, sky, assoc.samples[k].v});
    }
  }

  CalibrationGrid grid;
  grid.alpha = parse_list(args.alphas, "--alphas");
  grid.beta = parse_list(args.betas, "--betas");
  grid.gamma = parse_list(args.gammas, "--gammas");
  grid.m_occ = config.m_occ;

  const ReductionParams best = calibrate(samples, grid);
  const double mae = calibration_mae(samples, best);
  json j{{"alpha", best.alpha}, {"beta", best.beta},     {"gamma", best.gamma},
         {"m_occ", best.m_occ}, {"mae", mae},            {"n_samples", samples.size()},
         {"grid_points", grid.alpha.size() * grid.beta.size() * grid.gamma.size()}};
  if (!args.out.empty()) open_out(args.out) << j.dump(2) << '\n';
  std::cout << j.dump(2) << '\n';
  return 0;
}

int run_synth(const synth::SceneSpec& spec, const std::string& out_path, bool ascii) {
  const MapCloud cloud = synth::generate_scene(spec);
  save_cloud(out_path, cloud, ascii ? CloudFormat::PlyAscii : CloudFormat::Auto);
  std::cout << "synth: " << spec.scene << " seed " << spec.seed << ", " << cloud.size()
            << " points\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GNSS satellite visibility prediction from 3D point-cloud maps"};
  app.require_subcommand(1);

  // filter -----------------------------------------------------------------
  std::string f_in, f_out;
  std::optional<double> f_voxel;
  bool f_ascii = false;
  std::string f_config;
  auto* filter = app.add_subcommand("filter", "voxel-downsample a point cloud");
  filter->add_option("--in", f_in, "input cloud (.ply or .csv/.xyz)")->required();
  filter->add_option("--out", f_out, "output cloud")->required();
  filter->add_option("--voxel", f_voxel, "voxel side d_box, meters");
  filter->add_option("--params,--config", f_config, "config JSON");
  filter->add_flag("--ascii", f_ascii, "write ascii PLY");

  // features ---------------------------------------------------------------
  std::string ft_in, ft_out, ft_config;
  std::optional<int> ft_knn;
  std::optional<double> ft_dnn;
  bool ft_ascii = false;
  auto* features = app.add_subcommand("features", "per-point shape features and normals");
  features->add_option("--in", ft_in, "filtered cloud")->required();
  features->add_option("--out", ft_out, "feature PLY")->required();
  features->add_option("--knn", ft_knn, "neighborhood size");
  features->add_option("--dnn", ft_dnn, "neighborhood-mean rejection distance, m");
  features->add_option("--params,--config", ft_config, "config JSON");
  features->add_flag("--ascii", ft_ascii, "write ascii PLY");

  // ground -----------------------------------------------------------------
  std::string g_in, g_out, g_config;
  std::optional<double> g_delta, g_eps, g_hant;
  int g_stride = 1;
  bool g_ascii = false;
  auto* ground = app.add_subcommand("ground", "segment ground and build receiver poses");
  ground->add_option("--in", g_in, "feature PLY")->required();
  ground->add_option("--out", g_out, "pose PLY")->required();
  ground->add_option("--delta-ground", g_delta, "planarity threshold");
  ground->add_option("--eps-deg", g_eps, "max surface tilt, degrees");
  ground->add_option("--h-ant", g_hant, "antenna height, m");
  ground->add_option("--stride", g_stride, "keep every Nth pose");
  ground->add_option("--params,--config", g_config, "config JSON");
  ground->add_flag("--ascii", g_ascii, "write ascii PLY");

  // skymap -----------------------------------------------------------------
  std::string sm_nmea, sm_time, sm_out, sm_meta, sm_config;
  ModelFlags sm_flags;
  auto* skymap = app.add_subcommand("skymap", "satellite density map from an NMEA log");
  skymap->add_option("--nmea", sm_nmea, "NMEA log")->required();
  skymap->add_option("--time", sm_time, "UTC time of day or ISO-8601 (default: middle snapshot)");
  skymap->add_option("--out", sm_out, "sky map CSV")->required();
  skymap->add_option("--meta", sm_meta, "grid metadata JSON sidecar");
  skymap->add_option("--params,--config", sm_config, "config JSON");
  sm_flags.attach(skymap, false);

  // predict / baseline -----------------------------------------------------
  struct PredictArgs {
    std::string map, ground, nmea, time, out, ply, cells, config;
    std::size_t pose_index = 0;
    ModelFlags flags;
  };
  PredictArgs p_args, b_args;
  auto add_predict_options = [](CLI::App* cmd, PredictArgs& a) {
    cmd->add_option("--map", a.map, "feature PLY of the map")->required();
    cmd->add_option("--ground", a.ground, "pose PLY")->required();
    cmd->add_option("--nmea", a.nmea, "base-station NMEA log")->required();
    cmd->add_option("--time", a.time, "UTC time of day or ISO-8601 (default: middle snapshot)");
    cmd->add_option("--out", a.out, "per-pose CSV (x,y,z,v_hat)");
    cmd->add_option("--ply", a.ply, "per-pose PLY with v_hat");
    cmd->add_option("--cells", a.cells, "per-cell diagnostics CSV for one pose");
    cmd->add_option("--pose-index", a.pose_index, "pose for --cells (default 0)");
    cmd->add_option("--params,--config", a.config, "config JSON");
    a.flags.attach(cmd);
  };
  auto* predict_cmd =
      app.add_subcommand("predict", "predicted satellite count per ground pose");
  add_predict_options(predict_cmd, p_args);
  auto* baseline_cmd =
      app.add_subcommand("baseline", "line-of-sight baseline count per ground pose");
  add_predict_options(baseline_cmd, b_args);

  // eval --------------------------------------------------------------------
  EvalPaths e_paths;
  std::string e_config;
  ModelFlags e_flags;
  std::optional<double> e_window, e_radius, e_max_gap;
  std::optional<int> e_degree;
  auto* eval_cmd = app.add_subcommand("eval", "compare predictions against a rover log");
  eval_cmd->add_option("--map", e_paths.map, "feature PLY of the map");
  eval_cmd->add_option("--ground", e_paths.ground, "pose PLY");
  eval_cmd->add_option("--nmea", e_paths.nmea, "base-station NMEA log (constellation source)");
  eval_cmd->add_option("--rover", e_paths.rover, "rover NMEA log (truth; default: --nmea)");
  eval_cmd->add_option("--time", e_paths.time, "sky map time (default: median fix time)");
  eval_cmd->add_option("--origin", e_paths.origin, "ENU origin 'lat,lon'");
  eval_cmd->add_option("--report", e_paths.report, "metrics JSON");
  eval_cmd->add_option("--series", e_paths.series, "smoothed trajectory CSV");
  eval_cmd->add_option("--truth-out", e_paths.truth_out, "ground-truth CSV (utc_time,lat,lon,v)");
  eval_cmd->add_option("--vis", e_paths.vis_ply, "visibility map PLY");
  eval_cmd->add_option("--vis-csv", e_paths.vis_csv, "visibility map CSV");
  eval_cmd->add_option("--vis-los", e_paths.vis_los_ply, "baseline visibility map PLY");
  eval_cmd->add_option("--window", e_window, "averaging window, m");
  eval_cmd->add_option("--fit-degree", e_degree, "polynomial fit degree");
  eval_cmd->add_option("--radius", e_radius, "fix-to-pose association radius, m");
  eval_cmd->add_option("--max-gap", e_max_gap, "max fix-to-snapshot gap, s");
  eval_cmd->add_option("--params,--config", e_config, "config JSON");
  e_flags.attach(eval_cmd);

  // calibrate ----------------------------------------------------------------
  CalibrateArgs c_args;
  std::string c_config;
  ModelFlags c_flags;
  auto* calibrate_cmd =
      app.add_subcommand("calibrate", "grid-search reduction parameters on logged trajectories");
  calibrate_cmd->add_option("--data", c_args.data, "manifest JSON listing trajectories")
      ->required();
  calibrate_cmd->add_option("--out", c_args.out, "best-parameters JSON");
  calibrate_cmd->add_option("--alphas", c_args.alphas, "comma list of alpha candidates");
  calibrate_cmd->add_option("--betas", c_args.betas, "comma list of beta candidates");
  calibrate_cmd->add_option("--gammas", c_args.gammas, "comma list of gamma candidates");
  calibrate_cmd->add_option("--params,--config", c_config, "config JSON");
  c_flags.attach(calibrate_cmd);

  // synth ---------------------------------------------------------------------
  synth::SceneSpec s_spec;
  std::string s_out;
  bool s_ascii = false;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic scene cloud");
  synth_cmd->add_option("--scene", s_spec.scene, "plane|field|line|ball|wall|dome");
  synth_cmd->add_option("--seed", s_spec.seed, "RNG seed");
  synth_cmd->add_option("--count", s_spec.count, "point count (0 = scene default)");
  synth_cmd->add_option("--size", s_spec.size, "scene size, m (0 = scene default)");
  synth_cmd->add_option("--delta", s_spec.delta, "dome character: <=0 shell, >0 volumetric");
  synth_cmd->add_option("--out", s_out, "output cloud")->required();
  synth_cmd->add_flag("--ascii", s_ascii, "write ascii PLY");

  CLI11_PARSE(app, argc, argv);

  try {
    if (filter->parsed()) {
      Config config = load_config_or_default(f_config);
      return run_filter(f_in, f_out, f_voxel.value_or(config.d_box), f_ascii);
    }
    if (features->parsed()) {
      Config config = load_config_or_default(ft_config);
      if (ft_knn) config.k_nn = *ft_knn;
      if (ft_dnn) config.d_nn = *ft_dnn;
      config.validate();
      return run_features(ft_in, ft_out, config, ft_ascii);
    }
    if (ground->parsed()) {
      Config config = load_config_or_default(g_config);
      if (g_delta) config.delta_ground = *g_delta;
      if (g_eps) config.epsilon_deg = *g_eps;
      if (g_hant) config.h_ant = *g_hant;
      config.validate();
      return run_ground(g_in, g_out, config, g_stride, g_ascii);
    }
    if (skymap->parsed()) {
      Config config = load_config_or_default(sm_config);
      sm_flags.apply(config);
      return run_skymap(sm_nmea, sm_time, sm_out, sm_meta, config);
    }
    for (auto [cmd, args, is_baseline] :
         {std::tuple{predict_cmd, &p_args, false}, std::tuple{baseline_cmd, &b_args, true}}) {
      if (!cmd->parsed()) continue;
      Config config = load_config_or_default(args->config);
      args->flags.apply(config);
      return run_predict(args->map, args->ground, args->nmea, args->time, args->out, args->ply,
                         args->cells, args->pose_index, config, args->flags.stride,
                         args->flags.threads, is_baseline);
    }
    if (eval_cmd->parsed()) {
      Config config = load_config_or_default(e_config);
      e_flags.apply(config);
      if (e_window) config.window_m = *e_window;
      if (e_degree) config.fit_degree = *e_degree;
      if (e_radius) config.assoc_radius_m = *e_radius;
      if (e_max_gap) config.max_gap_s = *e_max_gap;
      config.validate();
      return run_eval(e_paths, config, e_flags.stride, e_flags.threads);
    }
    if (calibrate_cmd->parsed()) {
      Config config = load_config_or_default(c_config);
      c_flags.apply(config);
      return run_calibrate(c_args, config, c_flags.threads);
    }
    if (synth_cmd->parsed()) return run_synth(s_spec, s_out, s_ascii);
  } catch (const Error& e) {
    std::cerr << nlohmann::json{{"error", to_string(e.code())}, {"message", e.what()}}.dump()
              << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }
  return 0;
}
