#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "sensaipw/aipw.hpp"
#include "sensaipw/ingest.hpp"
#include "sensaipw/sensitivity.hpp"
#include "sensaipw/simulate.hpp"

namespace sensaipw {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitInfeasible = 1,  // rho bounds: no grid point satisfies the ordering
  kExitConfig = 2,
  kExitData = 3,
  kExitNumerical = 4,
  kExitInternal = 5,
};

/// Maps the currently handled exception to an exit code and writes its
/// message to err. Call from inside a catch block.
int exit_code_for_current_exception(std::ostream& err);

struct AnalysisConfig {
  std::filesystem::path input;
  std::filesystem::path output_dir;
  ColumnRoles roles;
  ExpansionSpec expansion;
  std::vector<TargetParameter> targets{TargetParameter::MeanY1, TargetParameter::MeanY0,
                                       TargetParameter::ATE};
  RhoRange rho1;  // for E(Y(1)), E(Y(1)|T=0) and the treated arm of the ATE
  RhoRange rho0;  // for E(Y(0)), E(Y(0)|T=1) and the control arm of the ATE
  SigmaMode sigma_mode = SigmaMode::Naive;
  double alpha = 0.05;
  NuisanceOptions nuisance;
  BoundsOptions bounds;

  /// Penalty text as given ("auto" or a number), kept for the report.
  std::string outcome_penalty = "auto";
  std::string propensity_penalty = "auto";

  void validate() const;
};

/// Parses "auto" or a nonnegative number (including "inf").
Penalty parse_penalty(const std::string& text);

/// Writes report.json, intervals.csv and plotdata.csv to output_dir.
void cmd_estimate(const AnalysisConfig& config, std::ostream& log);

/// Writes bounds.json and boundsdata.csv. Returns kExitInfeasible when
/// either feasible set is empty, else kExitOk.
int cmd_bounds(const AnalysisConfig& config, std::ostream& log);

struct SimulateConfig {
  SimScenario scenario;  // n, rho of the first grid cell are overridden
  std::vector<Index> ns{500};
  std::vector<double> rhos{0.8, 0.6, 0.4, 0.2};
  std::filesystem::path output_dir;
  unsigned threads = 0;
  bool diagnostics = false;

  void validate() const;
};

/// Writes coverage.csv, coverage.txt and simulate.json (and diagnostics.csv
/// when requested).
void cmd_simulate(const SimulateConfig& config, std::ostream& log);

/// Version string recorded in reports.
std::string tool_version();

}  // namespace sensaipw
