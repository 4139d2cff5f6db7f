#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace hj::cli {

inline constexpr int kExitPass = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitInconclusive = 2;
inline constexpr int kExitConfigError = 3;

const std::vector<std::string>& verbs();

struct Request {
  std::string verb;
  std::filesystem::path config;
  std::filesystem::path out = ".";
  std::optional<double> tolerance;  // replaces the primary tolerance of the verb
  std::optional<std::uint64_t> seed;
  std::optional<int> samples;  // random samples instead of the configured grid
  bool quiet = false;
};

struct Outcome {
  int exit_code = kExitConfigError;
  nlohmann::ordered_json report;  // also written to <out>/report.json
  std::string error;              // set for configuration errors
};

/// Load the config, run the verb, write report.json (and CSV files where the
/// verb produces trajectories) into `out`, and timing.json next to it. The
/// report depends only on the config bytes, the verb and the flags.
Outcome run(const Request& request);

/// Hex SHA-256 of the config bytes.
std::string config_digest(std::string_view bytes);

}  // namespace hj::cli
