#pragma once

// Penalized GLM engine shared by the linear and probit lasso fits.
//
// Minimizes  -(1/n) sum_i loglik(y_i, eta_i) + lambda * sum_j w_j |beta_j|
// over standardized columns, eta = b0 + x beta. The Gaussian log-likelihood
// is -(y - eta)^2 / 2, so that family reproduces the usual lasso objective.
// Each outer iteration forms the IRLS quadratic approximation (Fisher
// weights) and solves the weighted lasso subproblem by cyclic coordinate
// descent with an active-set strategy; probit steps are backtracked on the
// penalized objective.

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace sensaipw::detail {

using Eigen::Index;

enum class Family { Gaussian, Probit };

struct StandardizedDesign {
  Eigen::MatrixXd x;           // usable non-intercept columns, standardized
  std::vector<Index> source;   // design column index of each x column
  Eigen::VectorXd center;
  Eigen::VectorXd scale;
  bool intercept = true;
  Index design_cols = 0;
};

/// Centers (when the design has an intercept) and scales every non-intercept
/// column to unit mean square. Columns with no variation are dropped.
StandardizedDesign standardize(const Eigen::MatrixXd& values, bool has_intercept);

struct GlmState {
  double b0 = 0.0;
  Eigen::VectorXd beta;  // one per standardized column
};

struct EngineOptions {
  double tolerance = 1e-7;
  int max_sweeps = 100000;
  int max_newton = 100;
  double divergence_cap = 30.0;
};

struct SolveStatus {
  bool converged = true;
  bool diverged = false;
  int newton_iterations = 0;
};

class GlmProblem {
 public:
  GlmProblem(const StandardizedDesign& design, const Eigen::VectorXd& response, Family family,
             Eigen::VectorXd penalty_weights);
  GlmProblem(const StandardizedDesign& design, const Eigen::VectorXd& response, Family family);

  const StandardizedDesign& design() const { return design_; }
  Family family() const { return family_; }
  Index n() const { return response_.size(); }
  const Eigen::VectorXd& penalty_weights() const { return weights_; }

  /// Unpenalized intercept-only solution (beta = 0).
  GlmState null_state() const;

  Eigen::VectorXd linear_predictor(const GlmState& state) const;
  double deviance(const Eigen::VectorXd& eta) const;
  double objective(const Eigen::VectorXd& eta, const GlmState& state, double lambda) const;

  /// Score of the mean log-likelihood with respect to each column,
  /// (1/n) x_j' s(eta).
  Eigen::VectorXd gradient(const Eigen::VectorXd& eta) const;

  /// Proximal Newton solve restricted to the candidate columns; columns
  /// outside the candidate set keep their current value.
  SolveStatus solve(double lambda, GlmState& state, std::span<const Index> candidates,
                    const EngineOptions& options) const;

  /// Solve at one lambda, adding KKT violators to the working set until the
  /// full optimality conditions hold.
  SolveStatus solve_kkt(double lambda, GlmState& state, std::vector<Index> candidates,
                        const EngineOptions& options) const;

  /// Smallest lambda at which the null state is optimal.
  double lambda_max() const;

 private:
  void working(const Eigen::VectorXd& eta, Eigen::VectorXd& score, Eigen::VectorXd& weight) const;

  const StandardizedDesign& design_;
  const Eigen::VectorXd& response_;
  Family family_;
  Eigen::VectorXd weights_;
};

struct PathFit {
  std::vector<double> lambdas;  // possibly truncated by the stopping rules
  std::vector<GlmState> states;
  std::vector<double> deviance;
  double null_deviance = 0.0;
};

/// Geometric lambda sequence from lambda_max down to ratio * lambda_max.
std::vector<double> lambda_sequence(double lambda_max, int length, double ratio);

/// Warm-started lasso path, one lambda at a time, with sequential
/// strong-rule screening. The walk ends after a fit diverges, the deviance
/// ratio exceeds 0.999 or the fractional deviance gain falls below 1e-5.
class PathWalker {
 public:
  PathWalker(const GlmProblem& problem, const EngineOptions& options);

  /// Fits the next (smaller) lambda; false when the walk has ended and no
  /// fit was added.
  bool advance(double lambda);
  bool done() const { return done_; }

  const GlmState& state() const { return state_; }
  double deviance() const { return deviance_; }
  double null_deviance() const { return null_deviance_; }

 private:
  const GlmProblem& problem_;
  EngineOptions options_;
  GlmState state_;
  Eigen::VectorXd eta_;
  Eigen::VectorXd grad_;
  double previous_ = 0.0;
  double null_deviance_ = 0.0;
  double deviance_ = 0.0;
  int steps_ = 0;
  bool done_ = false;
};

/// Warm-started path with sequential strong-rule screening. Stops early when
/// the fractional deviance change falls below 1e-5, the deviance ratio
/// exceeds 0.999, or a fit diverges.
PathFit fit_path(const GlmProblem& problem, const std::vector<double>& lambdas,
                 const EngineOptions& options);

/// Back-transforms a standardized solution onto the design columns.
Eigen::VectorXd design_coefficients(const StandardizedDesign& design, const GlmState& state);

/// Log-likelihood contribution of a probit observation.
double probit_loglik(double t, double eta);

}  // namespace sensaipw::detail
