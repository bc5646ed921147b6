#pragma once

#include <stdexcept>
#include <string>

namespace skyshade {

/// Error codes for every failure the pipeline can report.
enum class errc {
  // nmea
  checksum_mismatch,
  malformed_framing,
  unknown_sentence_type,
  malformed_field,
  incomplete_group,
  inconsistent_totals,
  no_time_reference,
  // cloud / io
  unsupported_format,
  corrupt_header,
  truncated_payload,
  empty_cloud,
  // features
  cloud_too_small,
  degenerate_covariance,
  zero_vector,
  // ground
  degenerate_normal,
  // sky model / predictor
  out_of_range,
  grid_mismatch,
  empty_training_set,
  // eval
  empty_series,
  rank_deficient,
  missing_georeference,
  // config / cli
  invalid_config,
  io_failure,
};

inline const char* to_string(errc c) {
  switch (c) {
    case errc::checksum_mismatch: return "ChecksumMismatch";
    case errc::malformed_framing: return "MalformedFraming";
    case errc::unknown_sentence_type: return "UnknownSentenceType";
    case errc::malformed_field: return "MalformedField";
    case errc::incomplete_group: return "IncompleteGroup";
    case errc::inconsistent_totals: return "InconsistentTotals";
    case errc::no_time_reference: return "NoTimeReference";
    case errc::unsupported_format: return "UnsupportedFormat";
    case errc::corrupt_header: return "CorruptHeader";
    case errc::truncated_payload: return "TruncatedPayload";
    case errc::empty_cloud: return "EmptyCloud";
    case errc::cloud_too_small: return "CloudTooSmall";
    case errc::degenerate_covariance: return "DegenerateCovariance";
    case errc::zero_vector: return "ZeroVector";
    case errc::degenerate_normal: return "DegenerateNormal";
    case errc::out_of_range: return "OutOfRange";
    case errc::grid_mismatch: return "GridMismatch";
    case errc::empty_training_set: return "EmptyTrainingSet";
    case errc::empty_series: return "EmptySeries";
    case errc::rank_deficient: return "RankDeficient";
    case errc::missing_georeference: return "MissingGeoreference";
    case errc::invalid_config: return "InvalidConfig";
    case errc::io_failure: return "IoFailure";
  }
  return "UnknownError";
}

/// Single exception type carrying a typed code; callers that treat some
/// codes as skippable (e.g. UnknownSentenceType) dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace skyshade
