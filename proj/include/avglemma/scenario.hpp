#pragma once

#include <map>
#include <string>
#include <vector>

#include "avglemma/report.hpp"

namespace avglemma {

/// fit-alpha, gamma-opt, decay, measure-bounds, averaging-gain,
/// reconstruct-test, characteristics-test, multiplier-check, compare-exponents.
const std::vector<std::string>& subcommands();

struct RunResult {
  /// Report body: command, config hash, checks, results, artifacts, pass.
  Json report;
  /// File name -> CSV content.
  std::map<std::string, std::string> tables;
  /// File name -> two-column plot data.
  std::map<std::string, std::string> plots;
  bool pass = false;
};

/// Throws ConfigError with a JSON pointer for the first invalid field.
void validate_config(const std::string& command, const Json& config);

/// Validates, then runs one experiment. Numerical failures are reported as
/// failed checks; violated hypotheses (non-degeneracy, residual, support)
/// become a failed "hypotheses" check carrying the error message.
RunResult run_scenario(const std::string& command, const Json& config);

}  // namespace avglemma
