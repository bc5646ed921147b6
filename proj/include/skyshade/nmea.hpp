#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "skyshade/error.hpp"

namespace skyshade::nmea {

// ---------------------------------------------------------------------------
// Sentence framing
// ---------------------------------------------------------------------------

/// One validated NMEA 0183 sentence, split into address and data fields.
/// Only RMC, GST and GSV are accepted; everything else is reported as
/// UnknownSentenceType so stream readers can skip and count it.
struct RawSentence {
  std::string talker_id;      // "GP", "GL", "GA", "GB", "GN"
  std::string sentence_type;  // "RMC", "GST", "GSV"
  std::vector<std::string> fields;
  std::uint8_t checksum = 0;
};

inline bool is_accepted_type(std::string_view type) {
  return type == "RMC" || type == "GST" || type == "GSV";
}

inline std::uint8_t checksum_of(std::string_view payload) {
  std::uint8_t x = 0;
  for (char c : payload) x ^= static_cast<std::uint8_t>(c);
  return x;
}

namespace detail {

inline int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

inline void split_fields(std::string_view body, std::vector<std::string>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = body.find(',', start);
    if (comma == std::string_view::npos) {
      out.emplace_back(body.substr(start));
      return;
    }
    out.emplace_back(body.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace detail

/// Parses one line into a RawSentence, validating framing, checksum and
/// sentence type (in that order).
inline RawSentence parse_sentence(std::string_view line) {
  // Tolerate trailing CR/LF and surrounding whitespace.
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n' ||
                           line.back() == ' ' || line.back() == '\t'))
    line.remove_suffix(1);
  while (!line.empty() && (line.front() == ' ' || line.front() == '\t'))
    line.remove_prefix(1);

  if (line.empty() || line.front() != '$')
    fail(errc::malformed_framing, "missing '$' start delimiter");
  const std::size_t star = line.rfind('*');
  if (star == std::string_view::npos)
    fail(errc::malformed_framing, "missing '*' checksum delimiter");
  if (line.size() != star + 3)
    fail(errc::malformed_framing, "checksum must be exactly two hex digits");
  const int hi = detail::hex_digit(line[star + 1]);
  const int lo = detail::hex_digit(line[star + 2]);
  if (hi < 0 || lo < 0) fail(errc::malformed_framing, "non-hex checksum digits");
  const auto declared = static_cast<std::uint8_t>(hi * 16 + lo);

  const std::string_view payload = line.substr(1, star - 1);
  const std::uint8_t computed = checksum_of(payload);
  if (computed != declared)
    fail(errc::checksum_mismatch,
         "declared " + std::string(line.substr(star + 1, 2)) + " but payload XORs to " +
             std::to_string(computed));

  RawSentence s;
  detail::split_fields(payload, s.fields);
  const std::string address = s.fields.front();
  s.fields.erase(s.fields.begin());
  if (address.size() != 5)
    fail(errc::unknown_sentence_type, "address '" + address + "' is not talker+type");
  s.talker_id = address.substr(0, 2);
  s.sentence_type = address.substr(2, 3);
  s.checksum = declared;
  if (!is_accepted_type(s.sentence_type))
    fail(errc::unknown_sentence_type, "sentence type '" + s.sentence_type + "'");
  return s;
}

/// Inverse of parse_sentence; reproduces the original line byte-for-byte for
/// sentences whose checksum was written in uppercase hex.
inline std::string serialize_sentence(const RawSentence& s) {
  std::string payload = s.talker_id + s.sentence_type;
  for (const auto& f : s.fields) {
    payload += ',';
    payload += f;
  }
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%02X", checksum_of(payload));
  return "$" + payload + "*" + buf;
}

// ---------------------------------------------------------------------------
// Typed records
// ---------------------------------------------------------------------------

enum class System { Gps, Sbas, Glonass, Galileo, Beidou, Unknown };

inline const char* to_string(System s) {
  switch (s) {
    case System::Gps: return "GPS";
    case System::Sbas: return "SBAS";
    case System::Glonass: return "GLONASS";
    case System::Galileo: return "Galileo";
    case System::Beidou: return "BeiDou";
    case System::Unknown: return "Unknown";
  }
  return "Unknown";
}

struct FixRecord {
  double utc_time = 0.0;  // seconds of day (plus day offset once streamed)
  double latitude = 0.0;
  double longitude = 0.0;
  bool valid = false;
};

struct FixStatsRecord {
  double utc_time = 0.0;
  double rms_range_residual = 0.0;
  double sigma_lat = 0.0;
  double sigma_lon = 0.0;
  double sigma_alt = 0.0;
};

struct SatelliteObservation {
  System system = System::Unknown;
  int prn = 0;
  double elevation_deg = 0.0;  // [0, 90]
  double azimuth_deg = 0.0;    // [0, 360)
  std::optional<double> snr_db;
};

/// Time-aligned multi-constellation snapshot with the receiver cutoffs
/// attached. viable_count() applies both cutoffs; tracked_count() does not.
struct ConstellationSnapshot {
  double utc_time = 0.0;
  std::vector<SatelliteObservation> observations;
  double elevation_mask_deg = 15.0;
  double snr_cutoff_db = 35.0;

  int tracked_count() const { return static_cast<int>(observations.size()); }

  int viable_count() const {
    int n = 0;
    for (const auto& o : observations)
      if (o.snr_db && *o.snr_db >= snr_cutoff_db && o.elevation_deg >= elevation_mask_deg)
        ++n;
    return n;
  }
};

namespace detail {

inline double parse_number(const std::string& field, const char* what) {
  if (field.empty()) fail(errc::malformed_field, std::string(what) + " is empty");
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &pos);
  } catch (const std::exception&) {
    fail(errc::malformed_field, std::string(what) + " '" + field + "' is not numeric");
  }
  if (pos != field.size())
    fail(errc::malformed_field, std::string(what) + " '" + field + "' has trailing junk");
  return v;
}

inline int parse_int(const std::string& field, const char* what) {
  const double v = parse_number(field, what);
  if (v != std::floor(v))
    fail(errc::malformed_field, std::string(what) + " '" + field + "' is not an integer");
  return static_cast<int>(v);
}

/// hhmmss.sss -> seconds of day.
inline double parse_utc(const std::string& field) {
  if (field.size() < 6) fail(errc::malformed_field, "UTC field '" + field + "' too short");
  for (int i = 0; i < 6; ++i)
    if (field[i] < '0' || field[i] > '9')
      fail(errc::malformed_field, "UTC field '" + field + "' is not hhmmss");
  const int hh = (field[0] - '0') * 10 + (field[1] - '0');
  const int mm = (field[2] - '0') * 10 + (field[3] - '0');
  double ss = (field[4] - '0') * 10 + (field[5] - '0');
  if (field.size() > 6) ss += parse_number("0" + field.substr(6), "UTC fraction");
  if (hh > 23 || mm > 59 || ss >= 61.0)
    fail(errc::malformed_field, "UTC field '" + field + "' out of range");
  return hh * 3600.0 + mm * 60.0 + ss;
}

/// ddmm.mmmm (+ hemisphere letter) -> signed degrees.
inline double parse_angle(const std::string& field, const std::string& hemi, bool is_lat) {
  const double raw = parse_number(field, is_lat ? "latitude" : "longitude");
  const double deg = std::floor(raw / 100.0);
  const double min = raw - deg * 100.0;
  if (min >= 60.0) fail(errc::malformed_field, "minutes >= 60 in '" + field + "'");
  double v = deg + min / 60.0;
  if (hemi == "S" || hemi == "W")
    v = -v;
  else if (hemi != "N" && hemi != "E")
    fail(errc::malformed_field, "hemisphere '" + hemi + "'");
  const double limit = is_lat ? 90.0 : 180.0;
  if (v < -limit || v > limit)
    fail(errc::malformed_field, (is_lat ? std::string("latitude ") : std::string("longitude ")) +
                                    field + " out of range");
  return v;
}

inline System system_for_talker(const std::string& talker) {
  if (talker == "GP") return System::Gps;
  if (talker == "GL") return System::Glonass;
  if (talker == "GA") return System::Galileo;
  if (talker == "GB" || talker == "BD") return System::Beidou;
  return System::Unknown;
}

/// GN aggregate sentences carry no constellation in the talker; infer it
/// from the conventional PRN ranges.
inline System system_for_prn(int prn) {
  if (prn >= 1 && prn <= 32) return System::Gps;
  if (prn >= 33 && prn <= 64) return System::Sbas;
  if (prn >= 65 && prn <= 96) return System::Glonass;
  return System::Unknown;
}

}  // namespace detail

inline FixRecord parse_rmc(const RawSentence& s) {
  if (s.sentence_type != "RMC") fail(errc::malformed_field, "not an RMC sentence");
  if (s.fields.size() < 6) fail(errc::malformed_field, "RMC needs at least 6 fields");
  FixRecord r;
  r.utc_time = detail::parse_utc(s.fields[0]);
  r.valid = (s.fields[1] == "A");
  if (r.valid) {
    r.latitude = detail::parse_angle(s.fields[2], s.fields[3], true);
    r.longitude = detail::parse_angle(s.fields[4], s.fields[5], false);
  }
  return r;
}

inline FixStatsRecord parse_gst(const RawSentence& s) {
  if (s.sentence_type != "GST") fail(errc::malformed_field, "not a GST sentence");
  if (s.fields.size() < 8) fail(errc::malformed_field, "GST needs 8 fields");
  FixStatsRecord r;
  r.utc_time = detail::parse_utc(s.fields[0]);
  r.rms_range_residual = detail::parse_number(s.fields[1], "rms residual");
  r.sigma_lat = detail::parse_number(s.fields[5], "sigma_lat");
  r.sigma_lon = detail::parse_number(s.fields[6], "sigma_lon");
  r.sigma_alt = detail::parse_number(s.fields[7], "sigma_alt");
  if (r.sigma_lat < 0 || r.sigma_lon < 0 || r.sigma_alt < 0)
    fail(errc::malformed_field, "negative sigma in GST");
  return r;
}

/// Assembles one multi-part GSV group (shared talker, consistent headers)
/// into observations. Blocks with a blank PRN or out-of-range values are
/// dropped; an empty SNR field yields an untracked satellite.
inline std::vector<SatelliteObservation> assemble_gsv_group(
    const std::vector<RawSentence>& sentences) {
  if (sentences.empty()) fail(errc::incomplete_group, "empty GSV group");
  const std::string& talker = sentences.front().talker_id;
  const System talker_system = detail::system_for_talker(talker);

  int total = -1, count = -1;
  std::vector<SatelliteObservation> out;
  int expected_index = 1;
  for (const auto& s : sentences) {
    if (s.sentence_type != "GSV") fail(errc::malformed_field, "non-GSV sentence in group");
    if (s.talker_id != talker) fail(errc::inconsistent_totals, "mixed talkers in group");
    if (s.fields.size() < 3) fail(errc::malformed_field, "GSV header truncated");
    const int msg_total = detail::parse_int(s.fields[0], "GSV total messages");
    const int msg_index = detail::parse_int(s.fields[1], "GSV message index");
    const int sat_total = detail::parse_int(s.fields[2], "GSV satellite total");
    if (total == -1) {
      total = msg_total;
      count = sat_total;
    } else if (msg_total != total || sat_total != count) {
      fail(errc::inconsistent_totals, "GSV headers disagree");
    }
    if (msg_index != expected_index)
      fail(errc::incomplete_group, "expected part " + std::to_string(expected_index) +
                                       ", got " + std::to_string(msg_index));
    ++expected_index;

    // Satellite blocks of 4 fields; a trailing odd field (NMEA 4.x signal id)
    // is ignored.
    const std::size_t nblocks = (s.fields.size() - 3) / 4;
    for (std::size_t b = 0; b < nblocks; ++b) {
      const std::string& prn_f = s.fields[3 + b * 4];
      const std::string& el_f = s.fields[4 + b * 4];
      const std::string& az_f = s.fields[5 + b * 4];
      const std::string& snr_f = s.fields[6 + b * 4];
      if (prn_f.empty()) continue;
      SatelliteObservation obs;
      obs.prn = detail::parse_int(prn_f, "PRN");
      if (obs.prn <= 0) continue;
      obs.elevation_deg = el_f.empty() ? 0.0 : detail::parse_number(el_f, "elevation");
      obs.azimuth_deg = az_f.empty() ? 0.0 : detail::parse_number(az_f, "azimuth");
      if (obs.azimuth_deg == 360.0) obs.azimuth_deg = 0.0;
      if (!snr_f.empty()) obs.snr_db = detail::parse_number(snr_f, "snr");
      // Out-of-range blocks are dropped, not treated as malformed sentences.
      if (obs.elevation_deg < 0.0 || obs.elevation_deg > 90.0) continue;
      if (obs.azimuth_deg < 0.0 || obs.azimuth_deg >= 360.0) continue;
      if (obs.snr_db && (*obs.snr_db < 0.0 || *obs.snr_db > 99.0)) continue;
      obs.system =
          talker == "GN" ? detail::system_for_prn(obs.prn) : talker_system;
      out.push_back(obs);
    }
  }
  if (expected_index != total + 1)
    fail(errc::incomplete_group, "group ended at part " + std::to_string(expected_index - 1) +
                                     " of " + std::to_string(total));
  return out;
}

// ---------------------------------------------------------------------------
// Log stream assembly
// ---------------------------------------------------------------------------

/// Per-stream counters surfaced alongside parsed output.
struct LogStats {
  std::size_t lines = 0;
  std::size_t accepted = 0;
  std::size_t skipped_unknown_type = 0;
  std::size_t checksum_failures = 0;
  std::size_t malformed = 0;
  std::size_t incomplete_groups = 0;
  std::size_t no_time_reference = 0;
  std::size_t fixes_without_snapshot = 0;
  std::size_t day_rollovers = 0;
};

/// Reads a plain-text log (one sentence per line, optional ISO-8601 prefix
/// separated by a tab) into validated sentences, counting everything skipped.
inline std::vector<RawSentence> read_log(std::istream& in, LogStats& stats) {
  std::vector<RawSentence> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++stats.lines;
    std::string_view body = line;
    const std::size_t tab = line.find('\t');
    if (tab != std::string::npos) body = std::string_view(line).substr(tab + 1);
    try {
      out.push_back(parse_sentence(body));
      ++stats.accepted;
    } catch (const Error& e) {
      switch (e.code()) {
        case errc::unknown_sentence_type: ++stats.skipped_unknown_type; break;
        case errc::checksum_mismatch: ++stats.checksum_failures; break;
        default: ++stats.malformed; break;
      }
    }
  }
  return out;
}

namespace detail {

/// NMEA carries time-of-day only. Tracks a day counter so that logs crossing
/// midnight keep monotonic timestamps: returns tod + 86400 * days_so_far.
/// A drop of more than 12 h signals a rollover.
class DayUnroller {
 public:
  double unroll(double tod) {
    if (last_tod_ >= 0.0 && tod < last_tod_ - 43200.0) ++day_;
    last_tod_ = tod;
    return tod + 86400.0 * day_;
  }

  int days() const { return day_; }

 private:
  double last_tod_ = -1.0;
  int day_ = 0;
};

}  // namespace detail

/// Builds multi-constellation snapshots from a time-ordered sentence stream.
/// Completed GSV groups take their timestamp from the most recent RMC; groups
/// whose timestamps fall within merge_window_s of the open snapshot are merged
/// into it. GN aggregates are deduplicated against system-specific talkers.
inline std::vector<ConstellationSnapshot> build_snapshots(
    const std::vector<RawSentence>& log, double merge_window_s, LogStats& stats,
    double elevation_mask_deg = 15.0, double snr_cutoff_db = 35.0) {
  std::vector<ConstellationSnapshot> out;

  struct PendingGroup {
    std::vector<RawSentence> parts;
    int total = 0;
    int next_index = 1;
  };
  std::map<std::string, PendingGroup> pending;  // keyed by talker

  detail::DayUnroller clock;
  bool have_time = false;
  double current_time = 0.0;

  ConstellationSnapshot open;
  bool has_open = false;
  // (system, prn) -> {index into open.observations, came from GN aggregate}
  std::map<std::pair<int, int>, std::pair<std::size_t, bool>> members;

  auto flush_open = [&] {
    if (has_open) {
      out.push_back(std::move(open));
      open = ConstellationSnapshot{};
      members.clear();
      has_open = false;
    }
  };

  auto add_group = [&](const std::vector<SatelliteObservation>& observations,
                       bool from_gn) {
    if (!have_time) {
      ++stats.no_time_reference;
      return;
    }
    if (has_open && current_time - open.utc_time > merge_window_s) flush_open();
    if (!has_open) {
      open.utc_time = current_time;
      open.elevation_mask_deg = elevation_mask_deg;
      open.snr_cutoff_db = snr_cutoff_db;
      has_open = true;
    }
    for (const auto& obs : observations) {
      const auto key = std::make_pair(static_cast<int>(obs.system), obs.prn);
      auto it = members.find(key);
      if (it == members.end()) {
        members[key] = {open.observations.size(), from_gn};
        open.observations.push_back(obs);
      } else if (it->second.second && !from_gn) {
        // System-specific talker wins over a GN aggregate duplicate.
        open.observations[it->second.first] = obs;
        it->second.second = false;
      }
    }
  };

  for (const auto& s : log) {
    if (s.sentence_type == "RMC") {
      try {
        FixRecord fix = parse_rmc(s);
        current_time = clock.unroll(fix.utc_time);
        have_time = true;
      } catch (const Error&) {
        ++stats.malformed;
      }
      continue;
    }
    if (s.sentence_type != "GSV") continue;

    int msg_total = 0, msg_index = 0;
    try {
      if (s.fields.size() < 3) fail(errc::malformed_field, "GSV header truncated");
      msg_total = detail::parse_int(s.fields[0], "GSV total");
      msg_index = detail::parse_int(s.fields[1], "GSV index");
    } catch (const Error&) {
      ++stats.malformed;
      continue;
    }

    auto& slot = pending[s.talker_id];
    if (msg_index == 1) {
      if (!slot.parts.empty()) ++stats.incomplete_groups;
      slot = PendingGroup{};
      slot.total = msg_total;
    } else if (slot.parts.empty() || msg_index != slot.next_index ||
               msg_total != slot.total) {
      ++stats.incomplete_groups;
      slot = PendingGroup{};
      continue;
    }
    slot.parts.push_back(s);
    slot.next_index = msg_index + 1;
    if (msg_index == slot.total) {
      try {
        add_group(assemble_gsv_group(slot.parts), s.talker_id == "GN");
      } catch (const Error&) {
        ++stats.malformed;
      }
      slot = PendingGroup{};
    }
  }
  for (const auto& [talker, slot] : pending)
    if (!slot.parts.empty()) ++stats.incomplete_groups;
  flush_open();
  stats.day_rollovers = static_cast<std::size_t>(clock.days());
  return out;
}

/// One ground-truth sample: a valid fix with the satellite counts of the
/// nearest-in-time snapshot.
struct GroundTruthSample {
  double utc_time = 0.0;
  double latitude = 0.0;
  double longitude = 0.0;
  int viable = 0;
  int tracked = 0;
};

/// Pairs every valid RMC fix with the nearest snapshot. Fixes without a
/// snapshot within max_gap_s are dropped and counted in stats.
inline std::vector<GroundTruthSample> ground_truth_series(
    const std::vector<RawSentence>& log, LogStats& stats, double merge_window_s = 2.0,
    double max_gap_s = 5.0, double elevation_mask_deg = 15.0, double snr_cutoff_db = 35.0) {
  const auto snapshots =
      build_snapshots(log, merge_window_s, stats, elevation_mask_deg, snr_cutoff_db);

  std::vector<GroundTruthSample> series;
  detail::DayUnroller clock;
  for (const auto& s : log) {
    if (s.sentence_type != "RMC") continue;
    FixRecord fix;
    try {
      fix = parse_rmc(s);
    } catch (const Error&) {
      continue;  // already counted by build_snapshots
    }
    const double t = clock.unroll(fix.utc_time);
    if (!fix.valid) continue;

    // Nearest snapshot by |dt|; snapshots are time-ordered.
    auto it = std::lower_bound(snapshots.begin(), snapshots.end(), t,
                               [](const ConstellationSnapshot& snap, double value) {
                                 return snap.utc_time < value;
                               });
    const ConstellationSnapshot* best = nullptr;
    if (it != snapshots.end()) best = &*it;
    if (it != snapshots.begin()) {
      const auto& prev = *(it - 1);
      if (!best || std::abs(prev.utc_time - t) <= std::abs(best->utc_time - t)) best = &prev;
    }
    if (!best || std::abs(best->utc_time - t) > max_gap_s) {
      ++stats.fixes_without_snapshot;
      continue;
    }
    series.push_back({t, fix.latitude, fix.longitude, best->viable_count(),
                      best->tracked_count()});
  }
  return series;
}

/// Accepts "hh:mm:ss(.sss)" or an ISO-8601 stamp ("YYYY-MM-DDThh:mm:ss(.sss)"
/// with optional trailing 'Z'). NMEA fixes only carry time of day, so only
/// that part selects snapshots; a date prefix is tolerated and ignored.
inline double parse_time_of_day(const std::string& text) {
  std::string t = text;
  if (const auto sep = t.find('T'); sep != std::string::npos) t = t.substr(sep + 1);
  if (!t.empty() && (t.back() == 'Z' || t.back() == 'z')) t.pop_back();

  int h = 0, m = 0;
  double s = 0.0;
  char c1 = 0, c2 = 0;
  std::istringstream in(t);
  in >> h >> c1 >> m >> c2 >> s;
  if (!in || c1 != ':' || c2 != ':' || !in.eof() || h < 0 || h > 23 || m < 0 || m > 59 ||
      s < 0.0 || s >= 61.0)
    fail(errc::invalid_config,
         "time must be hh:mm:ss(.sss) or ISO-8601, got '" + text + "'");
  return h * 3600.0 + m * 60.0 + s;
}

/// Index of the snapshot nearest a target time of day, trying every day the
/// (time-ordered) snapshot list spans. Ties go to the earlier snapshot.
inline std::size_t select_snapshot(const std::vector<ConstellationSnapshot>& snapshots,
                                   double target_tod, std::size_t day_rollovers = 0) {
  if (snapshots.empty()) fail(errc::empty_series, "log produced no constellation snapshots");
  std::size_t best = 0;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t day = 0; day <= day_rollovers; ++day) {
    const double target = target_tod + 86400.0 * static_cast<double>(day);
    for (std::size_t i = 0; i < snapshots.size(); ++i) {
      const double gap = std::abs(snapshots[i].utc_time - target);
      if (gap < best_gap) {
        best_gap = gap;
        best = i;
      }
    }
  }
  return best;
}

}  // namespace skyshade::nmea
