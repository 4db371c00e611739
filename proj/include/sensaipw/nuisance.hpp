#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sensaipw/glmfit.hpp"

namespace sensaipw {

/// Which potential outcome the outcome regression targets. Treated fits
/// m(X) = E(Y|X,T=1) on treated rows; Control fits m0(X) = E(Y|X,T=0) on
/// control rows. The propensity model is always P(T=1|X) on all rows.
enum class Arm { Treated, Control };

enum class FitStrategy {
  PostLasso,  // lasso selection, then unpenalized refit on the selected columns
  Full,       // unpenalized fit on every column (low-dimensional designs)
};

struct NuisanceOptions {
  Penalty outcome_penalty = Penalty::automatic();
  Penalty propensity_penalty = Penalty::automatic();
  FitStrategy strategy = FitStrategy::PostLasso;
  double trim_floor = 0.01;
  LassoOptions lasso;
};

struct NuisanceFit {
  Arm arm = Arm::Treated;
  Eigen::VectorXd m_hat;  // outcome regression of the arm, every row
  Eigen::VectorXd g_hat;  // probit index, every row
  Eigen::VectorXd e_hat;  // Phi(g_hat), untrimmed
  std::vector<Index> outcome_selected;
  std::vector<Index> propensity_selected;
  double trim_floor = 0.01;
  Index trimmed_rows = 0;
  std::vector<std::string> warnings;

  Index rows() const { return m_hat.size(); }

  /// Probability of belonging to the arm, floored at trim_floor:
  /// max(e, floor) for Treated, max(1 - e, floor) for Control.
  double arm_propensity(Index i) const;

  /// Truncation index of the arm: g for Treated, -g for Control.
  double arm_index(Index i) const { return arm == Arm::Treated ? g_hat(i) : -g_hat(i); }

  /// Builds a fit from known nuisance values; g = qnorm(e), +-inf at 0 and 1.
  static NuisanceFit from_values(Arm arm, Eigen::VectorXd m, Eigen::VectorXd e,
                                 double trim_floor = 0.01);
  static NuisanceFit from_index(Arm arm, Eigen::VectorXd m, Eigen::VectorXd g,
                                double trim_floor = 0.01);
};

/// Propensity part of a nuisance fit; depends only on (X, T), so it can be
/// shared between fits that differ only in the outcome.
struct PropensityFit {
  Eigen::VectorXd g_hat;
  Eigen::VectorXd e_hat;
  std::vector<Index> selected;
  std::vector<std::string> warnings;
};

PropensityFit fit_propensity(const DesignMatrix& x, const Eigen::VectorXd& t,
                             const NuisanceOptions& options = {});

/// Fits the outcome regression on the arm's rows and the probit propensity
/// model on all rows, and evaluates both on every row. y may hold NaN
/// outside the arm.
NuisanceFit fit_nuisance(const DesignMatrix& x, const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                         Arm arm, const NuisanceOptions& options = {});

/// As above with a precomputed propensity fit for the same (X, T).
NuisanceFit fit_nuisance(const DesignMatrix& x, const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                         Arm arm, const NuisanceOptions& options, const PropensityFit& propensity);

}  // namespace sensaipw
