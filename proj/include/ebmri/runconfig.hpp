#pragma once

#include <nlohmann/json.hpp>

#include <string>

namespace ebmri {

inline constexpr const char *kVersion = "0.1.0";

/// Exit codes shared by all CLI commands.
enum ExitCode : int {
  exit_ok = 0,
  exit_internal = 1,
  exit_bad_config = 2,
  exit_missing_input = 3,
  exit_numerical = 4,
};

/// Creates the run directory (if needed) and returns its path.
std::string ensure_run_dir(const std::string &dir);

void write_json(const nlohmann::json &j, const std::string &path);

/// Manifest skeleton every command fills in: tool version, command name and
/// the fully resolved configuration echo.
nlohmann::json manifest_base(const std::string &command, const nlohmann::json &config_echo);

/// Prints a machine-readable error JSON to stdout, mirrors it into
/// <out_dir>/error.json when possible, and returns the exit code.
int emit_error(int code, const std::string &kind, const std::string &message,
               const std::string &out_dir = "");

} // namespace ebmri
