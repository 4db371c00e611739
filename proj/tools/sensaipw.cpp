#include <CLI11.hpp>
#include <iostream>
#include <map>

#include "sensaipw/commands.hpp"
#include "sensaipw/errors.hpp"

using namespace sensaipw;

namespace {

const std::map<std::string, SigmaMode> kSigma{{"naive", SigmaMode::Naive}, {"corrected", SigmaMode::Corrected}};
const std::map<std::string, FitStrategy> kStrategy{{"post-lasso", FitStrategy::PostLasso},
                                                   {"full", FitStrategy::Full}};
const std::map<std::string, bool> kCvRule{{"1se", true}, {"min", false}};

struct AnalysisFlags {
  AnalysisConfig config;
  std::string input;
  std::string output;
  std::vector<std::string> targets{"mean_y1", "mean_y0", "ate"};

  void add(CLI::App* app, bool with_targets) {
    auto& c = config;
    app->add_option("--input", input, "CSV input file")->required();
    app->add_option("--output", output, "output directory")->required();
    app->add_option("--treatment", c.roles.treatment, "0/1 treatment column")->required();
    app->add_option("--outcome", c.roles.outcome, "outcome column")->required();
    app->add_option("--covariates", c.roles.covariates, "covariate columns, comma separated")
        ->required()
        ->delimiter(',');
    app->add_option("--categorical", c.roles.categorical, "covariates to one-hot encode")->delimiter(',');
    app->add_option("--degree", c.expansion.degree, "total degree of numeric monomials")
        ->capture_default_str();
    app->add_option("--numeric-dummy-degree", c.expansion.numeric_dummy_degree,
                    "numeric powers interacted with categorical dummies")
        ->capture_default_str();
    app->add_option("--numeric-binary-degree", c.expansion.numeric_binary_degree,
                    "numeric powers interacted with 0/1 covariates")
        ->capture_default_str();
    app->add_flag("--dummy-interactions", c.expansion.dummy_interactions,
                  "products of indicators from different variables");
    app->add_option("--trim-floor", c.nuisance.trim_floor, "lower bound applied to arm propensities")
        ->capture_default_str();
    app->add_option("--seed", c.nuisance.lasso.fold_seed, "seed for cross-validation folds")
        ->capture_default_str();
    app->add_option("--outcome-penalty", c.outcome_penalty, "'auto' or a fixed lasso penalty")
        ->capture_default_str();
    app->add_option("--propensity-penalty", c.propensity_penalty, "'auto' or a fixed lasso penalty")
        ->capture_default_str();
    app->add_option("--strategy", c.nuisance.strategy, "post-lasso or full")
        ->transform(CLI::CheckedTransformer(kStrategy, CLI::ignore_case).description(""))
        ->option_text("post-lasso|full");
    app->add_option("--cv-rule", c.nuisance.lasso.cv_one_se, "cross-validated penalty: 1se or min")
        ->transform(CLI::CheckedTransformer(kCvRule, CLI::ignore_case).description(""))
        ->option_text("1se|min");

    if (!with_targets) {
      app->add_option("--rho-min", c.bounds.rho_min, "smallest rho on the search grid")->capture_default_str();
      app->add_option("--rho-max", c.bounds.rho_max, "largest rho on the search grid")->capture_default_str();
      app->add_option("--rho-step", c.bounds.step, "search grid spacing")->capture_default_str();
      app->add_option("--sigma", c.bounds.sigma_mode, "naive or corrected")
          ->transform(CLI::CheckedTransformer(kSigma, CLI::ignore_case).description(""))
          ->option_text("naive|corrected");
      return;
    }
    app->add_option("--targets", targets, "mean_y1, mean_y0, mean_y1_t0, mean_y0_t1, ate")->delimiter(',');
    app->add_option("--rho-min", c.rho1.min, "treated-arm rho range")->capture_default_str();
    app->add_option("--rho-max", c.rho1.max)->capture_default_str();
    app->add_option("--rho-grid", c.rho1.grid_size, "grid points")->capture_default_str();
    app->add_option("--rho0-min", c.rho0.min, "control-arm rho range")->capture_default_str();
    app->add_option("--rho0-max", c.rho0.max)->capture_default_str();
    app->add_option("--rho0-grid", c.rho0.grid_size)->capture_default_str();
    app->add_option("--sigma", c.sigma_mode, "naive or corrected")
        ->transform(CLI::CheckedTransformer(kSigma, CLI::ignore_case).description(""))
        ->option_text("naive|corrected");
    app->add_option("--alpha", c.alpha, "one minus confidence level")->capture_default_str();
  }

  const AnalysisConfig& finish() {
    config.input = input;
    config.output_dir = output;
    config.targets.clear();
    for (const auto& t : targets) config.targets.push_back(parse_target(t));
    return config;
  }
};

struct SimulateFlags {
  SimulateConfig config;
  std::string output;
  std::vector<std::string> estimators{"oracle", "plugin", "corrected"};

  void add(CLI::App* app) {
    auto& c = config;
    c.threads = default_threads();
    app->add_option("--output", output, "output directory")->required();
    app->add_option("--n", c.ns, "sample sizes, comma separated")->delimiter(',');
    app->add_option("--rho", c.rhos, "confounding correlations, comma separated")->delimiter(',');
    app->add_option("--reps", c.scenario.n_reps, "replications per sample size")->capture_default_str();
    app->add_option("--seed", c.scenario.seed, "master seed")->capture_default_str();
    app->add_option("--p", c.scenario.p, "covariate dimension, 0 for p = n")->capture_default_str();
    app->add_option("--estimators", estimators, "oracle, plugin, corrected")->delimiter(',');
    app->add_option("--alpha", c.scenario.alpha)->capture_default_str();
    app->add_option("--trim-floor", c.scenario.nuisance.trim_floor)->capture_default_str();
    app->add_option("--fold-seed", c.scenario.nuisance.lasso.fold_seed, "seed for cross-validation folds")
        ->capture_default_str();
    app->add_option("--strategy", c.scenario.nuisance.strategy, "post-lasso or full")
        ->transform(CLI::CheckedTransformer(kStrategy, CLI::ignore_case).description(""))
        ->option_text("post-lasso|full");
    app->add_option("--cv-rule", c.scenario.nuisance.lasso.cv_one_se, "cross-validated penalty: 1se or min")
        ->transform(CLI::CheckedTransformer(kCvRule, CLI::ignore_case).description(""))
        ->option_text("1se|min");
    app->add_option("--threads", c.threads, "worker threads (default SENSAIPW_THREADS or all cores)");
    app->add_flag("--diagnostics", c.diagnostics, "also write nuisance error diagnostics");
  }

  const SimulateConfig& finish() {
    config.output_dir = output;
    config.scenario.estimators.clear();
    for (const auto& e : estimators) config.scenario.estimators.push_back(parse_estimator(e));
    return config;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensitivity analysis for AIPW estimates under unobserved confounding"};
  app.set_version_flag("--version", tool_version());
  app.set_config("--config", "", "INI file; sections name subcommands, command-line flags take precedence");
  app.require_subcommand(1);

  AnalysisFlags estimate_flags;
  AnalysisFlags bounds_flags;
  SimulateFlags simulate_flags;
  auto* estimate = app.add_subcommand("estimate", "AIPW estimates with sensitivity and uncertainty intervals");
  estimate_flags.add(estimate, true);
  auto* bounds = app.add_subcommand("bounds", "rho ranges consistent with mean(Y|T=1) < middle < mean(Y|T=0)");
  bounds_flags.add(bounds, false);
  auto* simulate = app.add_subcommand("simulate", "coverage study of the bias-corrected intervals");
  simulate_flags.add(simulate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*estimate) {
      cmd_estimate(estimate_flags.finish(), std::cerr);
      return kExitOk;
    }
    if (*bounds) return cmd_bounds(bounds_flags.finish(), std::cerr);
    cmd_simulate(simulate_flags.finish(), std::cerr);
    return kExitOk;
  } catch (...) {
    return exit_code_for_current_exception(std::cerr);
  }
}
