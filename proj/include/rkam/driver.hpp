#pragma once

// Run configurations and the pipelines behind each CLI mode.

#include <cstdint>
#include <string>
#include <vector>

#include "rkam/io.hpp"

namespace rkam {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kReportVersion = 1;

struct RunConfig {
  std::string system;  // file path, "builtin:NAME" or "example:SEED"
  json system_json;    // inline definition, takes precedence when set
  std::string mode = "normal-form";
  std::vector<double> eps;
  json chi_grid;  // "a:b:k" per dimension, "c1,c2;c3,c4", or [[...], ...]
  int kappa = -1;
  std::vector<int> fix_indices;  // 1-based
  SolverConfig solver;
  std::uint64_t seed = 7;
  double verify_T = 100.0;
  double verify_dt = 0.01;
  int threads = 0;  // scan workers, 0 = hardware concurrency
};

RunConfig run_config_from_json(const json& j);

struct RunOutcome {
  int exit_code = 0;
  json report;
  std::string csv;  // scan table
};

ReversibleSystem resolve_system(const RunConfig& cfg);
std::vector<Vec> parse_chi_grid(const json& spec, int dim);

/// Never throws: errors become exit codes 1 (config), 2 (hypothesis) and
/// 3 (solver or internal) with an "error" entry naming the stage.
RunOutcome run(const RunConfig& cfg);

/// (eps, value) two-point and least-squares slopes in log-log scale.
json scaling_fit(const std::vector<double>& eps, const std::vector<double>& values);

}  // namespace rkam
