#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "sensaipw/aipw.hpp"
#include "sensaipw/nuisance.hpp"

namespace sensaipw {

enum class SigmaMode { Naive, Corrected };

/// Closed grid of sensitivity parameters, endpoints included. A degenerate
/// range (min == max) is the single point.
struct RhoRange {
  double min = 0.0;
  double max = 0.0;
  int grid_size = 101;

  static RhoRange point(double rho) { return {rho, rho, 1}; }
  void validate() const;
  std::vector<double> grid() const;
};

struct SensitivitySpec {
  RhoRange range;
  SigmaMode sigma_mode = SigmaMode::Naive;
  double alpha = 0.05;
};

struct BiasEstimate {
  double rho = 0.0;
  double sigma_hat = 0.0;
  double lambda_bar = 0.0;  // target-specific mean of the inverse Mills ratio
  double b_hat = 0.0;
  bool corrected = false;
};

struct Interval {
  double lower = 0.0;
  double point = 0.0;
  double upper = 0.0;
};

struct IntervalRow {
  double rho = 0.0;
  std::optional<double> rho0;  // second parameter of ATE rows
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct IntervalReport {
  TargetParameter target = TargetParameter::MeanY1;
  std::vector<IntervalRow> per_rho;
  double ui_lower = 0.0;
  double ui_upper = 0.0;
  Interval unconfounded;  // the rho = 0 interval
  double estimate = 0.0;  // AIPW estimate before bias correction
  double v_hat = 0.0;
  Index n = 0;
  std::vector<double> invalid_rhos;
  std::vector<std::string> warnings;
};

/// Root mean squared outcome residual over the fit's arm.
double sigma_naive(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit);

/// sigma_naive deflated by 1 - rho^2 E[h lambda(h)] - rho^2 E[lambda(h)^2]
/// over the arm, h the arm index (g for treated, -g for control). Throws
/// InvalidRho when that denominator is <= 1e-8.
double sigma_corrected(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit,
                       double rho);

/// Confounding bias of the AIPW estimate:
///   MeanY1          rho sigma E_n[lambda(g)]
///   MeanY0         -rho sigma E_n[lambda(-g)]
///   MeanY1GivenT0   MeanY1 bias / E_n[1 - T]
///   MeanY0GivenT1   MeanY0 bias / E_n[T]
/// The fit must belong to the target's arm.
BiasEstimate bias_hat(const Eigen::VectorXd& t, const NuisanceFit& fit, double rho, double sigma_hat,
                      TargetParameter target, bool corrected = false);

/// (estimate - b) -+ qnorm(1 - alpha/2) sqrt(v_hat / n).
Interval confidence_interval(const AipwResult& aipw, const BiasEstimate& bias, double alpha);

/// Bias estimate at rho with sigma estimated according to mode.
BiasEstimate bias_at(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit,
                     double rho, SigmaMode mode, TargetParameter target);

/// Per-rho intervals over the grid and their union. Grid points where the
/// corrected sigma is undefined are skipped with a warning; if none remain
/// NumericalError is thrown.
IntervalReport uncertainty_interval(const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                                    const NuisanceFit& fit, const AipwResult& aipw,
                                    const SensitivitySpec& spec);

/// ATE with independent grids for rho1 (treated fit) and rho0 (control fit);
/// the union runs over the product grid.
IntervalReport estimate_ate(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit1,
                            const NuisanceFit& fit0, const SensitivitySpec& spec1,
                            const SensitivitySpec& spec0, double alpha);

struct FeasibleInterval {
  std::optional<std::pair<double, double>> range;  // empty when infeasible
  std::vector<std::string> warnings;
};

/// Largest contiguous stretch of the grid where lo < middle(rho) < hi, with
/// its ends moved to the linearly interpolated crossings of the bounds. If
/// the satisfying set is split, the component containing rho = 0 is chosen
/// when the ordering holds there, else the widest one. NaN middles count as
/// violations.
FeasibleInterval feasible_rho_interval(const std::vector<double>& grid, const std::vector<double>& middle,
                                       double lo, double hi);

struct BoundsOptions {
  double rho_min = -0.99;
  double rho_max = 0.99;
  double step = 0.01;
  SigmaMode sigma_mode = SigmaMode::Corrected;
};

struct RhoBounds {
  std::vector<double> grid;
  std::vector<double> middle1;  // estimate of E(Y(1)|T=0) at rho1, NaN where undefined
  std::vector<double> middle0;  // estimate of E(Y(0)|T=1) at rho0
  double mean_y_treated = 0.0;
  double mean_y_control = 0.0;
  FeasibleInterval rho1;
  FeasibleInterval rho0;
};

/// Plausible sensitivity ranges from the ordering
///   E(Y|T=1) < E(Y(1)|T=0) < E(Y|T=0)  and  E(Y|T=1) < E(Y(0)|T=1) < E(Y|T=0).
RhoBounds derive_rho_bounds(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit1,
                            const NuisanceFit& fit0, const BoundsOptions& options = {});

}  // namespace sensaipw
