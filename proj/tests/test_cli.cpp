#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skyshade/cloud.hpp"
#include "skyshade/features.hpp"
#include "skyshade/ground.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "skyshade_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path_of(const char* name) { return (work_dir() / name).string(); }

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct RunResult {
  int status = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args, const std::string& env = {}) {
  static int counter = 0;
  const fs::path out_path = work_dir() / ("out_" + std::to_string(counter) + ".log");
  const fs::path err_path = work_dir() / ("err_" + std::to_string(counter) + ".log");
  ++counter;
  std::string cmd;
  if (!env.empty()) cmd += "env " + env + " ";
  cmd += SKYSHADE_CLI_PATH;
  cmd += " " + args + " >" + out_path.string() + " 2>" + err_path.string();
  const int rc = std::system(cmd.c_str());
  RunResult result;
  result.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  result.out = slurp(out_path);
  result.err = slurp(err_path);
  return result;
}

json last_error_json(const std::string& err) {
  std::istringstream in(err);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  REQUIRE(!last.empty());
  return json::parse(last);
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream split(line);
    std::string field;
    while (std::getline(split, field, ',')) fields.push_back(field);
    rows.push_back(std::move(fields));
  }
  return rows;
}

std::string golden_log() {
  return (fs::path(SKYSHADE_TEST_DATA_DIR) / "golden.nmea").string();
}

// Origin matching the golden log fixes at 47 deg 21.5' N, 8 deg 33.2' E.
constexpr const char* kOrigin = "47.358333333333336,8.553333333333333";

}  // namespace

TEST_CASE("cli pipeline chains synth through calibrate") {
  const std::string raw = path_of("map_raw.ply");
  const std::string map = path_of("map.ply");
  const std::string feats = path_of("feats.ply");
  const std::string poses = path_of("poses.ply");

  auto synth = run_cli("synth --scene plane --seed 11 --count 6000 --size 9 --out " + raw);
  INFO(synth.err);
  REQUIRE(synth.status == 0);
  CHECK(synth.out.find("synth") != std::string::npos);
  CHECK(skyshade::load_cloud(raw).points.size() == 6000);

  auto filter = run_cli("filter --in " + raw + " --out " + map + " --voxel 0.22");
  INFO(filter.err);
  REQUIRE(filter.status == 0);
  CHECK(filter.out.find("filter: 6000 -> ") != std::string::npos);
  const auto filtered = skyshade::load_cloud(map);
  REQUIRE(filtered.points.size() > 100);
  CHECK(filtered.points.size() < 6000);

  SECTION("filter output is reproducible byte for byte") {
    const std::string again = path_of("map_again.ply");
    REQUIRE(run_cli("filter --in " + raw + " --out " + again + " --voxel 0.22").status == 0);
    CHECK(slurp(map) == slurp(again));
  }

  auto features = run_cli("features --in " + map + " --out " + feats + " --knn 12 --dnn 0.6");
  INFO(features.err);
  REQUIRE(features.status == 0);
  CHECK(features.out.find("features: ") != std::string::npos);
  const auto feature_cloud = skyshade::load_features(feats);
  REQUIRE(feature_cloud.size() == filtered.points.size());

  auto ground = run_cli("ground --in " + feats + " --out " + poses + " --h-ant 1.3 --stride 4");
  INFO(ground.err);
  REQUIRE(ground.status == 0);
  const auto ground_set = skyshade::load_ground(poses, 1.3);
  REQUIRE(ground_set.poses.size() > 20);
  for (const auto& pose : ground_set.poses) {
    CHECK(pose.position.z > 1.0);  // plane sits near z = 0, antenna 1.3 up
    CHECK(pose.position.z < 1.6);
  }

  SECTION("skymap emits grid csv and metadata") {
    const std::string sky_csv = path_of("sky.csv");
    const std::string sky_meta = path_of("sky.json");
    auto skymap = run_cli("skymap --nmea " + golden_log() + " --time 12:00:06 --out " + sky_csv +
                          " --meta " + sky_meta);
    INFO(skymap.err);
    REQUIRE(skymap.status == 0);
    CHECK(skymap.err.find("sentences accepted") != std::string::npos);

    const json meta = json::parse(slurp(sky_meta));
    CHECK(meta.at("n_az") == 48);
    CHECK(meta.at("n_el") == 10);
    CHECK(meta.at("az_step_deg") == Catch::Approx(7.5));
    CHECK(meta.at("el_step_deg") == Catch::Approx(9.0));
    CHECK(meta.at("sigma_deg") == Catch::Approx(12.5));
    CHECK(meta.at("utc_time") == Catch::Approx(43206.0));
    CHECK(meta.at("viable_count") == 11);
    CHECK(meta.at("tracked_count") == 20);
    CHECK(meta.at("cell_sum") == Catch::Approx(11.0).margin(1e-9));

    const auto rows = read_csv(sky_csv);
    REQUIRE(rows.size() == 10);
    double total = 0.0;
    for (const auto& row : rows) {
      REQUIRE(row.size() == 48);
      for (const auto& cell : row) total += std::stod(cell);
    }
    CHECK(total == Catch::Approx(11.0).margin(1e-9));
  }

  SECTION("predict and baseline bracket and rerun deterministically") {
    const std::string vhat = path_of("vhat.csv");
    const std::string cells = path_of("cells.csv");
    const std::string base_args = " --map " + feats + " --ground " + poses + " --nmea " +
                                  golden_log() + " --time 12:00:06";
    auto predict = run_cli("predict" + base_args + " --out " + vhat + " --ply " +
                           path_of("vhat.ply") + " --cells " + cells + " --pose-index 0");
    INFO(predict.err);
    REQUIRE(predict.status == 0);
    CHECK(predict.out.find("predict: ") != std::string::npos);
    CHECK(predict.out.find("v=11") != std::string::npos);

    const auto vhat_rows = read_csv(vhat);
    REQUIRE(vhat_rows.size() == ground_set.poses.size() + 1);
    REQUIRE(vhat_rows[0] == std::vector<std::string>{"x", "y", "z", "v_hat"});
    for (std::size_t i = 1; i < vhat_rows.size(); ++i) {
      const double value = std::stod(vhat_rows[i][3]);
      CHECK(value >= 0.0);
      CHECK(value <= 11.0 + 1e-9);
    }
    CHECK(read_csv(cells).size() == 481);  // header + 48 x 10 cells

    auto rerun = run_cli("predict" + base_args + " --out " + path_of("vhat_t3.csv") +
                             " --threads 3",
                         "SKYSHADE_THREADS=3");
    REQUIRE(rerun.status == 0);
    CHECK(slurp(vhat) == slurp(path_of("vhat_t3.csv")));

    auto single = run_cli("predict" + base_args + " --out " + path_of("vhat_t1.csv"),
                          "SKYSHADE_THREADS=1");
    REQUIRE(single.status == 0);
    CHECK(slurp(vhat) == slurp(path_of("vhat_t1.csv")));

    const std::string base = path_of("base.csv");
    auto baseline = run_cli("baseline" + base_args + " --out " + base);
    INFO(baseline.err);
    REQUIRE(baseline.status == 0);
    const auto base_rows = read_csv(base);
    REQUIRE(base_rows.size() == vhat_rows.size());
    for (std::size_t i = 1; i < base_rows.size(); ++i)
      CHECK(std::stod(base_rows[i][3]) <= std::stod(vhat_rows[i][3]) + 1e-9);
  }

  SECTION("eval writes report, series, and truth tables") {
    const std::string report = path_of("report.json");
    const std::string series = path_of("series.csv");
    const std::string truth = path_of("truth.csv");
    auto eval = run_cli("eval --map " + feats + " --ground " + poses + " --nmea " + golden_log() +
                        " --origin " + kOrigin + " --radius 6 --window 4 --report " + report +
                        " --series " + series + " --truth-out " + truth);
    INFO(eval.err);
    REQUIRE(eval.status == 0);

    const json summary = json::parse(slurp(report));
    CHECK(summary.at("mae").get<double>() >= 0.0);
    CHECK(summary.at("rmse").get<double>() >= summary.at("mae").get<double>() - 1e-12);
    CHECK(summary.at("baseline_mae").get<double>() >= 0.0);
    CHECK(summary.contains("mean_bias"));
    CHECK(summary.contains("fit_coeffs"));
    CHECK(summary.at("n_samples").get<int>() >= 10);
    CHECK(summary.at("snapshot_utc_time").get<double>() >= 43200.0);
    CHECK(eval.out.find("mae") != std::string::npos);

    const auto truth_rows = read_csv(truth);
    REQUIRE(truth_rows.size() >= 11);
    CHECK(truth_rows[0] == std::vector<std::string>{"utc_time", "lat", "lon", "v"});
    const auto series_rows = read_csv(series);
    CHECK(series_rows.size() == 1 + summary.at("n_samples").get<std::size_t>());
    CHECK(series_rows[0] ==
          std::vector<std::string>{"arc_length", "v_mean", "v_std", "v_hat", "v_hat_baseline"});
  }

  SECTION("eval runs in truth-only mode without a map") {
    const std::string truth = path_of("truth_only.csv");
    auto eval = run_cli("eval --nmea " + golden_log() + " --truth-out " + truth);
    INFO(eval.err);
    REQUIRE(eval.status == 0);
    CHECK(read_csv(truth).size() >= 11);
  }

  SECTION("calibrate searches the parameter grid over a manifest") {
    const std::string manifest_path = path_of("manifest.json");
    const std::string config_path = path_of("calib_config.json");
    {
      std::ofstream out(manifest_path);
      out << json{{"trajectories",
                   json::array({{{"map", feats}, {"ground", poses}, {"nmea", golden_log()}}})}}
                 .dump(2);
      std::ofstream cfg(config_path);
      cfg << json{{"origin", {{"lat", 47.358333333333336}, {"lon", 8.553333333333333}}},
                  {"assoc_radius_m", 6.0}}
                 .dump(2);
    }
    const std::string result_path = path_of("calibration.json");
    auto calibrate = run_cli("calibrate --data " + manifest_path + " --config " + config_path +
                             " --alphas 2,4 --betas -0.25,0.25 --out " + result_path);
    INFO(calibrate.err);
    REQUIRE(calibrate.status == 0);
    const json result = json::parse(slurp(result_path));
    CHECK((result.at("alpha") == 2.0 || result.at("alpha") == 4.0));
    CHECK((result.at("beta") == -0.25 || result.at("beta") == 0.25));
    CHECK(result.at("gamma").get<double>() == Catch::Approx(1e-10));
    CHECK(result.at("m_occ") == 5);
    CHECK(result.at("mae").get<double>() >= 0.0);
    CHECK(result.at("n_samples").get<int>() >= 10);
    CHECK(result.at("grid_points") == 4);
    CHECK(json::parse(calibrate.out) == result);
  }
}

TEST_CASE("cli reports structured errors on stderr") {
  SECTION("missing input file") {
    auto missing = run_cli("predict --map " + path_of("nope.ply") + " --ground " +
                           path_of("nope2.ply") + " --nmea " + golden_log() + " --out " +
                           path_of("x.csv"));
    CHECK(missing.status == 1);
    const json error = last_error_json(missing.err);
    CHECK(error.at("error") == "IoFailure");
    CHECK(error.at("message").get<std::string>().find("nope.ply") != std::string::npos);
  }

  SECTION("invalid parameter from the library") {
    const std::string cloud = path_of("tiny.xyz");
    {
      std::ofstream out(cloud);
      out << "0 0 0\n1 1 1\n";
    }
    auto bad = run_cli("filter --in " + cloud + " --out " + path_of("tiny_out.xyz") +
                       " --voxel -1");
    CHECK(bad.status == 1);
    CHECK(last_error_json(bad.err).at("error") == "InvalidConfig");
  }

  SECTION("unknown synthetic scene") {
    auto bad = run_cli("synth --scene torus --out " + path_of("torus.ply"));
    CHECK(bad.status == 1);
    CHECK(last_error_json(bad.err).at("error") == "InvalidConfig");
  }

  SECTION("eval without an origin cannot associate") {
    const std::string feats = path_of("err_feats.ply");
    const std::string poses = path_of("err_poses.ply");
    REQUIRE(run_cli("synth --scene plane --seed 3 --count 2000 --size 6 --out " +
                    path_of("err_map.ply"))
                .status == 0);
    REQUIRE(run_cli("features --in " + path_of("err_map.ply") + " --out " + feats +
                    " --knn 12 --dnn 0.6")
                .status == 0);
    REQUIRE(run_cli("ground --in " + feats + " --out " + poses + " --stride 8").status == 0);
    auto eval = run_cli("eval --map " + feats + " --ground " + poses + " --nmea " + golden_log() +
                        " --report " + path_of("err_report.json"));
    CHECK(eval.status == 1);
    CHECK(last_error_json(eval.err).at("error") == "MissingGeoreference");
  }

  SECTION("subcommand is required") {
    CHECK(run_cli("").status != 0);
    CHECK(run_cli("--help").status == 0);
  }
}
