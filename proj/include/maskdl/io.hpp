#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "maskdl/learner.hpp"
#include "maskdl/types.hpp"

namespace maskdl {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);
/// Strict parse of a whole string as a double; nullopt on failure.
std::optional<double> parse_double(std::string_view text);

/// Comma-separated trajectory with a header line. Columns: t, epochs,
/// cpu_time_s, surrogate, test_objective, l1_l2_ratio, plus rmse when
/// `with_rmse`. Missing optional values are empty fields.
void write_trajectory(const std::string& path, const std::vector<TrajectoryRecord>& records,
                      bool with_rmse);
std::string format_trajectory(const std::vector<TrajectoryRecord>& records, bool with_rmse);
std::vector<TrajectoryRecord> read_trajectory(const std::string& path);
std::vector<TrajectoryRecord> parse_trajectory(const std::string& text);

/// Time at which the score enters, and then stays within, a relative band
/// `tolerance` around the final score. Returns nullopt for empty input.
std::optional<double> convergence_time(const std::vector<double>& times, const std::vector<double>& scores,
                                       double tolerance = 1e-3);

/// Binary dense matrix file (little-endian, doubles stored bit-exactly).
void write_matrix(const std::string& path, const Matrix& m);
Matrix read_matrix(const std::string& path);

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_bytes(const std::string& path);

/// Versioned checkpoint: magic, format version, the resolved run
/// configuration text and the learner state (which carries the schedules,
/// dictionary, statistics and optional code cache).
struct CheckpointHeader {
    std::uint64_t version = 1;
    std::string run_config;
};

std::vector<std::uint8_t> encode_checkpoint(const Learner& learner, const std::string& run_config);
/// Reads the header and leaves `reader` positioned at the learner state.
CheckpointHeader read_checkpoint_header(BinaryReader& reader);

/// Flat key=value configuration. '#' starts a comment; blank lines are skipped.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::string& path);
std::string format_key_values(const KeyValues& values);

}  // namespace maskdl
