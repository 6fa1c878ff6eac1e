#pragma once

#include <string>
#include <vector>

namespace wclab {

/// Batch front-end. Subcommands: train, stability, spectrum, sweep, bounds,
/// check. Writes config_echo.json, results.csv and summary.json into the
/// output directory. Exit codes: 0 ok, 1 config/validation error, 2 runtime
/// error.
int run_cli(const std::vector<std::string>& args);

}  // namespace wclab
