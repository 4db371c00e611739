#include "sensaipw/aipw.hpp"

#include <stdexcept>
#include <string>

#include "sensaipw/errors.hpp"

namespace sensaipw {

std::string_view target_name(TargetParameter target) {
  switch (target) {
    case TargetParameter::MeanY1: return "mean_y1";
    case TargetParameter::MeanY0: return "mean_y0";
    case TargetParameter::MeanY1GivenT0: return "mean_y1_t0";
    case TargetParameter::MeanY0GivenT1: return "mean_y0_t1";
    case TargetParameter::ATE: return "ate";
  }
  return "unknown";
}

TargetParameter parse_target(std::string_view name) {
  for (auto t : {TargetParameter::MeanY1, TargetParameter::MeanY0, TargetParameter::MeanY1GivenT0,
                 TargetParameter::MeanY0GivenT1, TargetParameter::ATE}) {
    if (target_name(t) == name) return t;
  }
  throw ConfigError("unknown target '" + std::string(name) +
                    "' (expected mean_y1, mean_y0, mean_y1_t0, mean_y0_t1 or ate)");
}

Arm target_arm(TargetParameter target) {
  switch (target) {
    case TargetParameter::MeanY1:
    case TargetParameter::MeanY1GivenT0: return Arm::Treated;
    case TargetParameter::MeanY0:
    case TargetParameter::MeanY0GivenT1: return Arm::Control;
    case TargetParameter::ATE: break;
  }
  throw std::invalid_argument("ATE combines both arms");
}

namespace {

void check_inputs(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit, Arm arm) {
  if (fit.arm != arm) throw std::invalid_argument("nuisance fit targets the other arm");
  if (t.size() != y.size() || t.size() != fit.rows() || fit.e_hat.size() != fit.rows()) {
    throw std::invalid_argument("data and nuisance fit are not row-aligned");
  }
  if (t.size() == 0) throw std::invalid_argument("no rows");
  const double a = arm == Arm::Treated ? 1.0 : 0.0;
  for (Index i = 0; i < t.size(); ++i) {
    if (t(i) == a && !(fit.arm_propensity(i) > 0.0)) {
      throw std::invalid_argument("propensity of the arm is zero on row " + std::to_string(i));
    }
  }
}

// Residual term A (Y - m) / p, zero off the arm (Y may be NaN there).
double weighted_residual(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit,
                         Index i) {
  const double a = fit.arm == Arm::Treated ? 1.0 : 0.0;
  if (t(i) != a) return 0.0;
  return (y(i) - fit.m_hat(i)) / fit.arm_propensity(i);
}

AipwResult arm_mean(TargetParameter target, const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                    const NuisanceFit& fit) {
  const Index n = t.size();
  Eigen::VectorXd h(n);
  for (Index i = 0; i < n; ++i) h(i) = weighted_residual(t, y, fit, i) + fit.m_hat(i);
  AipwResult r;
  r.target = target;
  r.n = n;
  r.n_t = static_cast<Index>(t.sum());
  r.estimate = h.mean();
  r.psi = h.array() - r.estimate;
  r.v_hat = variance_hat(t, y, fit, r.estimate);
  return r;
}

AipwResult conditional_mean(TargetParameter target, const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                            const NuisanceFit& fit) {
  const Index n = t.size();
  // other-arm indicator and its mean
  const double a = fit.arm == Arm::Treated ? 1.0 : 0.0;
  Eigen::VectorXd other(n);
  for (Index i = 0; i < n; ++i) other(i) = t(i) == a ? 0.0 : 1.0;
  const double q = other.mean();
  if (q <= 0.0 || q >= 1.0) throw DataError("both treated and control rows are required");

  Eigen::VectorXd h(n);
  for (Index i = 0; i < n; ++i) {
    if (other(i) == 1.0) {
      h(i) = fit.m_hat(i);
    } else {
      const double p = fit.arm_propensity(i);
      h(i) = (y(i) - fit.m_hat(i)) * (1.0 - p) / p;
    }
  }
  AipwResult r;
  r.target = target;
  r.n = n;
  r.n_t = static_cast<Index>(t.sum());
  r.estimate = h.mean() / q;
  r.psi = (h - r.estimate * other) / q;
  r.v_hat = r.psi.squaredNorm() / static_cast<double>(n);
  return r;
}

}  // namespace

double variance_hat(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit,
                    double tau_hat) {
  const Index n = t.size();
  double first = 0.0;
  double second = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double w = weighted_residual(t, y, fit, i);
    first += w * w;
    const double d = fit.m_hat(i) - tau_hat;
    second += d * d;
  }
  return first / static_cast<double>(n) + second / static_cast<double>(n);
}

AipwResult aipw_mean_y1(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit) {
  check_inputs(t, y, fit, Arm::Treated);
  return arm_mean(TargetParameter::MeanY1, t, y, fit);
}

AipwResult aipw_mean_y0(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit) {
  check_inputs(t, y, fit, Arm::Control);
  return arm_mean(TargetParameter::MeanY0, t, y, fit);
}

AipwResult aipw_tau10(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit) {
  check_inputs(t, y, fit, Arm::Treated);
  return conditional_mean(TargetParameter::MeanY1GivenT0, t, y, fit);
}

AipwResult aipw_tau01(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit) {
  check_inputs(t, y, fit, Arm::Control);
  return conditional_mean(TargetParameter::MeanY0GivenT1, t, y, fit);
}

AipwResult aipw_estimate(TargetParameter target, const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                         const NuisanceFit& fit) {
  switch (target) {
    case TargetParameter::MeanY1: return aipw_mean_y1(t, y, fit);
    case TargetParameter::MeanY0: return aipw_mean_y0(t, y, fit);
    case TargetParameter::MeanY1GivenT0: return aipw_tau10(t, y, fit);
    case TargetParameter::MeanY0GivenT1: return aipw_tau01(t, y, fit);
    case TargetParameter::ATE: break;
  }
  throw std::invalid_argument("ATE needs one fit per arm");
}

}  // namespace sensaipw
