#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sensaipw {

using Eigen::Index;

/// Design matrix of the nuisance regressions. When has_intercept is set,
/// column 0 is the constant 1 and is never penalized.
struct DesignMatrix {
  Eigen::MatrixXd values;
  bool has_intercept = true;
  std::vector<std::string> column_names;

  /// Prepends an intercept column to raw covariates.
  static DesignMatrix with_intercept(const Eigen::MatrixXd& covariates,
                                     const std::vector<std::string>& names);

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }

  /// Throws std::invalid_argument when n < 2, an entry is non-finite, a name
  /// is missing or the intercept column is not constant 1.
  void validate() const;

  /// Row subset, keeping column metadata.
  DesignMatrix subset(std::span<const Index> rows) const;
};

class Penalty {
 public:
  /// Data-driven penalty ("auto"): plug-in rule for the linear lasso,
  /// cross-validated deviance for the probit lasso.
  static Penalty automatic() { return Penalty(true, 0.0); }
  /// Fixed penalty on the standardized scale; +infinity is allowed.
  static Penalty fixed(double value);

  bool is_auto() const { return auto_; }
  double value() const { return value_; }

 private:
  Penalty(bool is_auto, double value) : auto_(is_auto), value_(value) {}
  bool auto_;
  double value_;
};

struct LassoOptions {
  double tolerance = 1e-7;  // coordinate change, standardized scale
  int max_sweeps = 100000;
  int max_newton = 100;

  int cv_folds = 10;
  std::uint64_t fold_seed = 20230101;
  int path_length = 100;
  double path_tolerance = 1e-4;  // coordinate tolerance while tracing CV paths
  int cv_patience = 10;          // lambdas past the CV minimum before stopping
  // Pick the largest lambda whose CV loss is within one standard error of
  // the minimum; false picks the minimum.
  bool cv_one_se = true;

  // Plug-in rule: lambda = c * qnorm(1 - gamma/(2p)) / sqrt(n), per-column
  // loadings sqrt(mean(x_j^2 e^2)); gamma <= 0 means 0.1 / log(n).
  double plugin_c = 1.1;
  double plugin_gamma = 0.0;
  int plugin_iterations = 15;
  double plugin_tolerance = 1e-5;

  // Probit fits whose standardized coefficients exceed this are reported as
  // diverged (quasi-separation).
  double divergence_cap = 30.0;
};

struct LinearFit {
  Eigen::VectorXd coefficients;  // one per design column, zeros off-support
  std::vector<Index> selected;   // non-intercept design columns in the model
  double penalty = 0.0;          // standardized-scale lambda actually used
  bool converged = true;
  std::vector<std::string> warnings;

  Eigen::VectorXd fitted(const DesignMatrix& x) const { return x.values * coefficients; }
};

struct ProbitFit {
  Eigen::VectorXd coefficients;
  std::vector<Index> selected;
  double penalty = 0.0;
  bool converged = true;
  int iterations = 0;
  std::vector<std::string> warnings;

  /// Linear index g(x) = x . coefficients.
  Eigen::VectorXd index(const DesignMatrix& x) const { return x.values * coefficients; }
  /// Propensity Phi(g(x)).
  Eigen::VectorXd propensity(const DesignMatrix& x) const;
};

/// Lasso-penalized least squares,
///   (1/2n) ||y - X b||^2 + penalty * sum_{j>0} |b_j|,
/// over internally standardized columns by cyclic coordinate descent.
/// Zero-variance columns are never selected. penalty = 0 returns the least
/// squares solution on all usable columns.
LinearFit lasso_linear(const DesignMatrix& x, const Eigen::VectorXd& y, Penalty penalty,
                       const LassoOptions& options = {});

/// Lasso-penalized probit regression,
///   -(1/n) sum loglik + penalty * sum_{j>0} |b_j|,
/// by proximal Newton (penalized IRLS) with coordinate descent inner solves.
/// A diverging fit is returned with converged == false.
ProbitFit lasso_probit(const DesignMatrix& x, const Eigen::VectorXd& t, Penalty penalty,
                       const LassoOptions& options = {});

/// Unpenalized least squares on the intercept plus the selected columns.
/// Rank deficiency yields the minimum-norm solution and a warning.
LinearFit refit_linear(const DesignMatrix& x, const Eigen::VectorXd& y,
                       std::span<const Index> selected);

/// Probit maximum likelihood on the intercept plus the selected columns by
/// Newton-Raphson (score tolerance 1e-8, at most 100 iterations). Throws
/// ConvergenceError on separation or non-convergence.
ProbitFit refit_probit(const DesignMatrix& x, const Eigen::VectorXd& t,
                       std::span<const Index> selected, const LassoOptions& options = {});

}  // namespace sensaipw
