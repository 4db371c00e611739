#include "sensaipw/commands.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <ostream>

#include "sensaipw/csv.hpp"
#include "sensaipw/errors.hpp"

#ifndef SENSAIPW_VERSION
#define SENSAIPW_VERSION "unknown"
#endif

namespace sensaipw {

using json = nlohmann::ordered_json;

std::string tool_version() { return SENSAIPW_VERSION; }

int exit_code_for_current_exception(std::ostream& err) {
  try {
    throw;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  } catch (...) {
    err << "internal error: unknown exception\n";
    return kExitInternal;
  }
}

Penalty parse_penalty(const std::string& text) {
  if (text == "auto") return Penalty::automatic();
  if (text == "inf" || text == "Inf") return Penalty::fixed(std::numeric_limits<double>::infinity());
  std::optional<double> v;
  try {
    v = parse_number(text);
  } catch (const DataError&) {
  }
  if (!v || !(*v >= 0.0)) throw ConfigError("penalty must be 'auto' or a nonnegative number, got '" + text + "'");
  return Penalty::fixed(*v);
}

void AnalysisConfig::validate() const {
  if (input.empty()) throw ConfigError("no input file given");
  if (output_dir.empty()) throw ConfigError("no output directory given");
  if (roles.treatment.empty() || roles.outcome.empty()) throw ConfigError("treatment and outcome columns are required");
  if (targets.empty()) throw ConfigError("no targets requested");
  for (const auto& c : roles.categorical) {
    if (std::find(roles.covariates.begin(), roles.covariates.end(), c) == roles.covariates.end()) {
      throw ConfigError("categorical column '" + c + "' is not listed as a covariate");
    }
  }
  expansion.validate();
  rho1.validate();
  rho0.validate();
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(nuisance.trim_floor >= 0.0 && nuisance.trim_floor < 0.5)) throw ConfigError("trim floor must lie in [0, 0.5)");
}

namespace {

std::string_view sigma_name(SigmaMode m) { return m == SigmaMode::Naive ? "naive" : "corrected"; }

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json range_json(const RhoRange& r) { return {{"min", r.min}, {"max", r.max}, {"grid_size", r.grid_size}}; }

json config_json(const AnalysisConfig& c) {
  json j;
  j["input"] = c.input.string();
  j["output_dir"] = c.output_dir.string();
  j["treatment"] = c.roles.treatment;
  j["outcome"] = c.roles.outcome;
  j["covariates"] = c.roles.covariates;
  j["categorical"] = c.roles.categorical;
  j["expansion"] = {{"degree", c.expansion.degree},
                    {"numeric_dummy_degree", c.expansion.numeric_dummy_degree},
                    {"numeric_binary_degree", c.expansion.numeric_binary_degree},
                    {"dummy_interactions", c.expansion.dummy_interactions}};
  json targets = json::array();
  for (auto t : c.targets) targets.push_back(target_name(t));
  j["targets"] = targets;
  j["rho1"] = range_json(c.rho1);
  j["rho0"] = range_json(c.rho0);
  j["sigma"] = sigma_name(c.sigma_mode);
  j["alpha"] = c.alpha;
  j["trim_floor"] = c.nuisance.trim_floor;
  j["outcome_penalty"] = c.outcome_penalty;
  j["propensity_penalty"] = c.propensity_penalty;
  j["strategy"] = c.nuisance.strategy == FitStrategy::Full ? "full" : "post-lasso";
  j["cv_rule"] = c.nuisance.lasso.cv_one_se ? "1se" : "min";
  j["seed"] = c.nuisance.lasso.fold_seed;
  j["bounds"] = {{"min", c.bounds.rho_min},
                 {"max", c.bounds.rho_max},
                 {"step", c.bounds.step},
                 {"sigma", sigma_name(c.bounds.sigma_mode)}};
  return j;
}

struct Prepared {
  Dataset data;
  IngestSummary summary;
  DesignMatrix x;
  std::optional<NuisanceFit> fit1;
  std::optional<NuisanceFit> fit0;
};

bool needs_arm(const std::vector<TargetParameter>& targets, Arm arm) {
  for (auto t : targets) {
    if (t == TargetParameter::ATE || target_arm(t) == arm) return true;
  }
  return false;
}

Prepared prepare(const AnalysisConfig& config, bool both_arms, std::ostream& log) {
  Prepared p;
  p.data = ingest(config.input, config.roles, &p.summary);
  for (const auto& w : p.summary.warnings) log << "warning: " << w << '\n';
  const Index treated = p.data.treated_count();
  if (treated < 2 || p.data.rows() - treated < 2) {
    throw DataError("need at least two treated and two control rows");
  }
  p.x = expand_covariates(p.data, config.expansion);
  log << "rows used: " << p.data.rows() << " (" << treated << " treated), design columns: " << p.x.cols() - 1
      << '\n';

  NuisanceOptions options = config.nuisance;
  options.outcome_penalty = parse_penalty(config.outcome_penalty);
  options.propensity_penalty = parse_penalty(config.propensity_penalty);
  const Eigen::VectorXd& t = p.data.treatment;
  const Eigen::VectorXd& y = p.data.outcome;
  const PropensityFit propensity = fit_propensity(p.x, t, options);
  if (both_arms || needs_arm(config.targets, Arm::Treated)) {
    p.fit1 = fit_nuisance(p.x, t, y, Arm::Treated, options, propensity);
  }
  if (both_arms || needs_arm(config.targets, Arm::Control)) {
    p.fit0 = fit_nuisance(p.x, t, y, Arm::Control, options, propensity);
  }
  for (const auto* f : {p.fit1 ? &*p.fit1 : nullptr, p.fit0 ? &*p.fit0 : nullptr}) {
    if (f == nullptr) continue;
    for (const auto& w : f->warnings) log << "warning: " << w << '\n';
  }
  return p;
}

json data_json(const Prepared& p) {
  const Index treated = p.data.treated_count();
  return {{"rows_read", p.summary.rows_read},
          {"rows_dropped", p.summary.rows_dropped},
          {"rows_used", p.data.rows()},
          {"treated", treated},
          {"controls", p.data.rows() - treated},
          {"design_columns", p.x.cols() - 1}};
}

json fit_json(const NuisanceFit& fit, const DesignMatrix& x) {
  json outcome = json::array();
  for (Index j : fit.outcome_selected) outcome.push_back(x.column_names[static_cast<std::size_t>(j)]);
  json propensity = json::array();
  for (Index j : fit.propensity_selected) propensity.push_back(x.column_names[static_cast<std::size_t>(j)]);
  return {{"outcome_selected", outcome},
          {"propensity_selected", propensity},
          {"trimmed_rows", fit.trimmed_rows},
          {"min_propensity", fit.e_hat.minCoeff()},
          {"max_propensity", fit.e_hat.maxCoeff()},
          {"warnings", fit.warnings}};
}

json interval_json(const Interval& ci) {
  return {{"lower", ci.lower}, {"point", ci.point}, {"upper", ci.upper}};
}

}  // namespace

void cmd_estimate(const AnalysisConfig& config, std::ostream& log) {
  config.validate();
  const Prepared p = prepare(config, false, log);
  const Eigen::VectorXd& t = p.data.treatment;
  const Eigen::VectorXd& y = p.data.outcome;

  SensitivitySpec spec1{config.rho1, config.sigma_mode, config.alpha};
  SensitivitySpec spec0{config.rho0, config.sigma_mode, config.alpha};

  json report;
  report["tool"] = "sensaipw";
  report["command"] = "estimate";
  report["version"] = tool_version();
  report["seed"] = config.nuisance.lasso.fold_seed;
  report["config"] = config_json(config);
  report["data"] = data_json(p);
  json fits;
  if (p.fit1) fits["treated"] = fit_json(*p.fit1, p.x);
  if (p.fit0) fits["control"] = fit_json(*p.fit0, p.x);
  report["nuisance"] = fits;

  CsvTable intervals;
  intervals.header = {"target", "rho", "rho0", "point", "ci_lower", "ci_upper"};
  CsvTable plot;
  plot.header = {"target", "rho", "point", "ci_lower", "ci_upper", "ci0_lower", "ci0_upper", "ui_lower", "ui_upper"};

  json results = json::array();
  for (auto target : config.targets) {
    IntervalReport r;
    json entry;
    entry["target"] = target_name(target);
    if (target == TargetParameter::ATE) {
      r = estimate_ate(t, y, *p.fit1, *p.fit0, spec1, spec0, config.alpha);
      entry["rho1"] = range_json(config.rho1);
      entry["rho0"] = range_json(config.rho0);
    } else {
      const NuisanceFit& fit = target_arm(target) == Arm::Treated ? *p.fit1 : *p.fit0;
      const SensitivitySpec& spec = target_arm(target) == Arm::Treated ? spec1 : spec0;
      const AipwResult a = aipw_estimate(target, t, y, fit);
      r = uncertainty_interval(t, y, fit, a, spec);
      entry["rho"] = range_json(spec.range);
    }
    for (const auto& w : r.warnings) log << "warning: " << target_name(target) << ": " << w << '\n';
    entry["estimate"] = r.estimate;
    entry["v_hat"] = r.v_hat;
    entry["n"] = r.n;
    entry["unconfounded"] = interval_json(r.unconfounded);
    entry["ui"] = {{"lower", r.ui_lower}, {"upper", r.ui_upper}};
    json invalid = json::array();
    for (double v : r.invalid_rhos) invalid.push_back(v);
    entry["invalid_rhos"] = invalid;
    entry["warnings"] = r.warnings;
    results.push_back(entry);

    for (const auto& row : r.per_rho) {
      intervals.rows.push_back({std::string(target_name(target)), format_number(row.rho),
                                row.rho0 ? format_number(*row.rho0) : "NA", format_number(row.point),
                                format_number(row.lower), format_number(row.upper)});
      if (target != TargetParameter::ATE) {
        plot.rows.push_back({std::string(target_name(target)), format_number(row.rho), format_number(row.point),
                             format_number(row.lower), format_number(row.upper),
                             format_number(r.unconfounded.lower), format_number(r.unconfounded.upper),
                             format_number(r.ui_lower), format_number(r.ui_upper)});
      }
    }
    log << target_name(target) << ": estimate " << r.unconfounded.point << " CI [" << r.unconfounded.lower
        << ", " << r.unconfounded.upper << "], UI [" << r.ui_lower << ", " << r.ui_upper << "]\n";
  }
  report["results"] = results;

  write_file_atomic(config.output_dir / "report.json", report.dump(2) + "\n");
  write_file_atomic(config.output_dir / "intervals.csv", format_csv(intervals));
  write_file_atomic(config.output_dir / "plotdata.csv", format_csv(plot));
}

int cmd_bounds(const AnalysisConfig& config, std::ostream& log) {
  config.validate();
  const Prepared p = prepare(config, true, log);
  const RhoBounds b = derive_rho_bounds(p.data.treatment, p.data.outcome, *p.fit1, *p.fit0, config.bounds);

  CsvTable data;
  data.header = {"rho", "middle1", "middle0", "mean_y_treated", "mean_y_control"};
  for (std::size_t k = 0; k < b.grid.size(); ++k) {
    data.rows.push_back({format_number(b.grid[k]), format_number(b.middle1[k]), format_number(b.middle0[k]),
                         format_number(b.mean_y_treated), format_number(b.mean_y_control)});
  }
  auto range = [](const FeasibleInterval& f) {
    if (!f.range) return json(nullptr);
    return json{{"min", f.range->first}, {"max", f.range->second}};
  };

  json report;
  report["tool"] = "sensaipw";
  report["command"] = "bounds";
  report["version"] = tool_version();
  report["seed"] = config.nuisance.lasso.fold_seed;
  report["config"] = config_json(config);
  report["data"] = data_json(p);
  report["mean_y_treated"] = b.mean_y_treated;
  report["mean_y_control"] = b.mean_y_control;
  report["rho1"] = range(b.rho1);
  report["rho0"] = range(b.rho0);
  report["rho1_warnings"] = b.rho1.warnings;
  report["rho0_warnings"] = b.rho0.warnings;

  write_file_atomic(config.output_dir / "bounds.json", report.dump(2) + "\n");
  write_file_atomic(config.output_dir / "boundsdata.csv", format_csv(data));

  auto describe = [&](const char* label, const FeasibleInterval& f) {
    for (const auto& w : f.warnings) log << "warning: " << label << ": " << w << '\n';
    if (f.range) {
      log << label << " in (" << f.range->first << ", " << f.range->second << ")\n";
    } else {
      log << label << ": feasible set is empty\n";
    }
  };
  describe("rho1", b.rho1);
  describe("rho0", b.rho0);
  return b.rho1.range && b.rho0.range ? kExitOk : kExitInfeasible;
}

void SimulateConfig::validate() const {
  if (output_dir.empty()) throw ConfigError("no output directory given");
  if (ns.empty() || rhos.empty()) throw ConfigError("simulation grid is empty");
  for (Index n : ns) {
    SimScenario s = scenario;
    s.n = n;
    for (double r : rhos) {
      s.rho = r;
      s.validate();
    }
  }
}

void cmd_simulate(const SimulateConfig& config, std::ostream& log) {
  config.validate();
  CoverageTable table;
  CsvTable diag;
  diag.header = {"n", "rep", "mse_outcome", "mse_propensity", "scaled_product", "failed"};
  for (Index n : config.ns) {
    SimScenario s = config.scenario;
    s.n = n;
    s.rho = config.rhos.front();
    log << "n=" << n << ": " << s.n_reps << " replications over " << config.rhos.size() << " rho values\n";
    table.append(run_coverage(s, config.rhos, config.threads));
    if (config.diagnostics) {
      for (const auto& d : nuisance_diagnostics(s, config.threads)) {
        diag.rows.push_back({std::to_string(n), std::to_string(d.rep), format_number(d.mse_outcome),
                             format_number(d.mse_propensity), format_number(d.scaled_product),
                             d.failed ? "1" : "0"});
      }
    }
  }

  json report;
  report["tool"] = "sensaipw";
  report["command"] = "simulate";
  report["version"] = tool_version();
  report["seed"] = config.scenario.seed;
  json cfg;
  cfg["n"] = config.ns;
  cfg["p"] = config.scenario.p;
  cfg["rho"] = config.rhos;
  cfg["reps"] = config.scenario.n_reps;
  json est = json::array();
  for (auto e : config.scenario.estimators) est.push_back(estimator_name(e));
  cfg["estimators"] = est;
  cfg["alpha"] = config.scenario.alpha;
  cfg["trim_floor"] = config.scenario.nuisance.trim_floor;
  cfg["fold_seed"] = config.scenario.nuisance.lasso.fold_seed;
  cfg["cv_rule"] = config.scenario.nuisance.lasso.cv_one_se ? "1se" : "min";
  report["config"] = cfg;
  json rows = json::array();
  for (const auto& r : table.rows) {
    rows.push_back({{"n", r.n},
                    {"rho", r.rho},
                    {"estimator", estimator_name(r.estimator)},
                    {"reps", r.reps},
                    {"failures", r.failures},
                    {"coverage", number_or_null(r.coverage)},
                    {"mean_width", number_or_null(r.mean_width)},
                    {"mc_se", number_or_null(r.mc_se)},
                    {"flagged", r.flagged}});
  }
  report["coverage"] = rows;

  write_file_atomic(config.output_dir / "coverage.csv", table.to_csv());
  write_file_atomic(config.output_dir / "coverage.txt", table.to_text());
  write_file_atomic(config.output_dir / "simulate.json", report.dump(2) + "\n");
  if (config.diagnostics) write_file_atomic(config.output_dir / "diagnostics.csv", format_csv(diag));
  log << table.to_text();
}

}  // namespace sensaipw
