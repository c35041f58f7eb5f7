#pragma once

// Command-line front end. Subcommands: critical, simulate, rates, lfc-check,
// empty-stratum-study. Exit codes: 0 success, 2 configuration error,
// 3 numerical error.

#include <iosfwd>
#include <string>

#include "pwer/sim.hpp"

namespace pwer::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// Environment variable consulted for the thread count when --threads is
/// not given.
inline constexpr const char* kThreadsEnv = "PWER_THREADS";

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Scenario section of a config document (YAML). Throws ConfigError with the
/// offending line on unknown keys or invalid values.
sim::ScenarioSpec parse_scenario(const std::string& yaml_text);

}  // namespace pwer::cli
