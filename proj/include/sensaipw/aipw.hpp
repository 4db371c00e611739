#pragma once

#include <Eigen/Dense>
#include <string_view>

#include "sensaipw/nuisance.hpp"

namespace sensaipw {

enum class TargetParameter {
  MeanY1,         // E(Y(1))
  MeanY0,         // E(Y(0))
  MeanY1GivenT0,  // E(Y(1) | T = 0)
  MeanY0GivenT1,  // E(Y(0) | T = 1)
  ATE,            // E(Y(1)) - E(Y(0))
};

std::string_view target_name(TargetParameter target);
TargetParameter parse_target(std::string_view name);

/// Arm whose outcome regression the target needs.
Arm target_arm(TargetParameter target);

struct AipwResult {
  TargetParameter target = TargetParameter::MeanY1;
  double estimate = 0.0;
  Eigen::VectorXd psi;  // influence values, mean zero
  double v_hat = 0.0;
  Index n = 0;
  Index n_t = 0;
};

/// E_n[T (Y - m) / e + m]; psi centered at the estimate.
AipwResult aipw_mean_y1(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit);

/// E_n[(1 - T)(Y - m0) / (1 - e) + m0] with a Control-arm fit.
AipwResult aipw_mean_y0(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit);

/// E_n[(1 - T) m + T (Y - m)(1 - e)/e] / E_n[1 - T] with a Treated-arm fit;
/// psi by the delta method for the ratio, v_hat = mean(psi^2).
AipwResult aipw_tau10(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit);

/// E_n[T m0 + (1 - T)(Y - m0) e/(1 - e)] / E_n[T] with a Control-arm fit.
AipwResult aipw_tau01(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit);

/// Dispatches on the target (not ATE).
AipwResult aipw_estimate(TargetParameter target, const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                         const NuisanceFit& fit);

/// V = E_n[A (Y - m)^2 / p^2] + E_n[(m - tau)^2], A the arm indicator and
/// p the floored arm propensity.
double variance_hat(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit,
                    double tau_hat);

}  // namespace sensaipw
