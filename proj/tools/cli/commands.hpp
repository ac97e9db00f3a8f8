#pragma once

#include <mechreg/common.hpp>

#include <string>
#include <vector>

namespace mechreg::cli {

enum ExitCode { exit_ok = 0, exit_config = 2, exit_numerical = 3 };

std::vector<std::string> command_names();

/// Parses the config file and overrides, runs `command` and writes its CSV
/// files. Throws mechreg::Error; config and io failures carry those codes.
/// Returns the paths written, in order.
std::vector<std::string> run_command(const std::string& command, const std::string& config_path,
                                     const std::vector<std::string>& overrides);

/// Resolved configuration (defaults filled in) as `key = value` lines.
std::string resolved_config(const std::string& command, const std::string& config_path,
                            const std::vector<std::string>& overrides);

/// 3 for numerical failures (non-finite values, singular solves, divergent
/// integration); 2 for everything else, i.e. bad configuration, bad input
/// shapes or files.
int exit_code(ErrorCode code);

/// `mechreg <command> [--config path] [key=value ...]`; returns the exit code.
int run_cli(std::vector<std::string> args);

}  // namespace mechreg::cli
