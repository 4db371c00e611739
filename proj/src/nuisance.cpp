#include "sensaipw/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "sensaipw/errors.hpp"
#include "sensaipw/mathfn.hpp"

namespace sensaipw {

double NuisanceFit::arm_propensity(Index i) const {
  const double p = arm == Arm::Treated ? e_hat(i) : 1.0 - e_hat(i);
  return std::max(p, trim_floor);
}

namespace {

void count_trimmed(NuisanceFit& fit) {
  fit.trimmed_rows = 0;
  for (Index i = 0; i < fit.rows(); ++i) {
    const double p = fit.arm == Arm::Treated ? fit.e_hat(i) : 1.0 - fit.e_hat(i);
    if (p < fit.trim_floor) ++fit.trimmed_rows;
  }
  if (fit.trimmed_rows > 0) {
    fit.warnings.push_back(std::to_string(fit.trimmed_rows) + " rows with propensity below " +
                           std::to_string(fit.trim_floor) + " floored");
  }
}

void check_floor(double floor) {
  if (!(floor >= 0.0 && floor < 0.5)) throw std::invalid_argument("trim floor must lie in [0, 0.5)");
}

}  // namespace

NuisanceFit NuisanceFit::from_values(Arm arm, Eigen::VectorXd m, Eigen::VectorXd e, double trim_floor) {
  if (m.size() != e.size()) throw std::invalid_argument("nuisance vectors differ in length");
  check_floor(trim_floor);
  Eigen::VectorXd g(e.size());
  for (Index i = 0; i < e.size(); ++i) {
    if (!(e(i) >= 0.0 && e(i) <= 1.0)) throw std::invalid_argument("propensity outside [0, 1]");
    if (e(i) == 0.0) {
      g(i) = -std::numeric_limits<double>::infinity();
    } else if (e(i) == 1.0) {
      g(i) = std::numeric_limits<double>::infinity();
    } else {
      g(i) = norm_quantile(e(i));
    }
  }
  NuisanceFit fit;
  fit.arm = arm;
  fit.m_hat = std::move(m);
  fit.g_hat = std::move(g);
  fit.e_hat = std::move(e);
  fit.trim_floor = trim_floor;
  count_trimmed(fit);
  return fit;
}

NuisanceFit NuisanceFit::from_index(Arm arm, Eigen::VectorXd m, Eigen::VectorXd g, double trim_floor) {
  if (m.size() != g.size()) throw std::invalid_argument("nuisance vectors differ in length");
  check_floor(trim_floor);
  NuisanceFit fit;
  fit.arm = arm;
  fit.e_hat.resize(g.size());
  for (Index i = 0; i < g.size(); ++i) {
    if (std::isnan(g(i))) throw std::invalid_argument("probit index is NaN");
    fit.e_hat(i) = std::isinf(g(i)) ? (g(i) > 0 ? 1.0 : 0.0) : norm_cdf(g(i));
  }
  fit.m_hat = std::move(m);
  fit.g_hat = std::move(g);
  fit.trim_floor = trim_floor;
  count_trimmed(fit);
  return fit;
}

PropensityFit fit_propensity(const DesignMatrix& x, const Eigen::VectorXd& t,
                             const NuisanceOptions& options) {
  x.validate();
  if (t.size() != x.rows()) throw std::invalid_argument("treatment length does not match design rows");
  ProbitFit model;
  PropensityFit out;
  if (options.strategy == FitStrategy::Full) {
    std::vector<Index> all_cols;
    for (Index j = x.has_intercept ? 1 : 0; j < x.cols(); ++j) all_cols.push_back(j);
    model = refit_probit(x, t, all_cols, options.lasso);
  } else {
    const ProbitFit sel = lasso_probit(x, t, options.propensity_penalty, options.lasso);
    out.warnings = sel.warnings;
    model = refit_probit(x, t, sel.selected, options.lasso);
  }
  for (const auto& w : model.warnings) out.warnings.push_back(w);
  out.selected = model.selected;
  out.g_hat = model.index(x);
  out.e_hat = model.propensity(x);
  return out;
}

NuisanceFit fit_nuisance(const DesignMatrix& x, const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                         Arm arm, const NuisanceOptions& options) {
  return fit_nuisance(x, t, y, arm, options, fit_propensity(x, t, options));
}

NuisanceFit fit_nuisance(const DesignMatrix& x, const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                         Arm arm, const NuisanceOptions& options, const PropensityFit& propensity) {
  x.validate();
  if (t.size() != x.rows() || y.size() != x.rows() || propensity.g_hat.size() != x.rows()) {
    throw std::invalid_argument("treatment/outcome/propensity length does not match design rows");
  }
  check_floor(options.trim_floor);
  const double arm_value = arm == Arm::Treated ? 1.0 : 0.0;
  std::vector<Index> arm_rows;
  for (Index i = 0; i < t.size(); ++i) {
    if (t(i) == arm_value) arm_rows.push_back(i);
  }
  if (arm_rows.size() < 2) throw DataError("fewer than two rows in the outcome model's arm");
  const DesignMatrix xa = x.subset(arm_rows);
  Eigen::VectorXd ya(static_cast<Index>(arm_rows.size()));
  for (std::size_t k = 0; k < arm_rows.size(); ++k) ya(static_cast<Index>(k)) = y(arm_rows[k]);
  if (!ya.allFinite()) throw DataError("missing outcome in the outcome model's arm");

  NuisanceFit fit;
  fit.arm = arm;
  fit.trim_floor = options.trim_floor;

  LinearFit outcome;
  if (options.strategy == FitStrategy::Full) {
    std::vector<Index> all_cols;
    for (Index j = x.has_intercept ? 1 : 0; j < x.cols(); ++j) all_cols.push_back(j);
    outcome = refit_linear(xa, ya, all_cols);
  } else {
    const LinearFit sel = lasso_linear(xa, ya, options.outcome_penalty, options.lasso);
    fit.warnings = sel.warnings;
    auto chosen = sel.selected;
    const auto cap = static_cast<std::size_t>(std::max<Index>(0, xa.rows() - 2));
    if (chosen.size() > cap) {
      // keep the largest standardized effects so the refit stays identified
      std::vector<std::pair<double, Index>> ranked;
      for (Index j : chosen) {
        const double sd = std::sqrt((xa.values.col(j).array() - xa.values.col(j).mean()).square().mean());
        ranked.emplace_back(-std::fabs(sel.coefficients(j)) * sd, j);
      }
      std::sort(ranked.begin(), ranked.end());
      chosen.clear();
      for (std::size_t k = 0; k < cap; ++k) chosen.push_back(ranked[k].second);
      std::sort(chosen.begin(), chosen.end());
      fit.warnings.push_back("outcome selection truncated to " + std::to_string(cap) + " columns");
    }
    outcome = refit_linear(xa, ya, chosen);
  }
  for (const auto& w : outcome.warnings) fit.warnings.push_back(w);
  for (const auto& w : propensity.warnings) fit.warnings.push_back(w);

  fit.outcome_selected = outcome.selected;
  fit.propensity_selected = propensity.selected;
  fit.m_hat = outcome.fitted(x);
  fit.g_hat = propensity.g_hat;
  fit.e_hat = propensity.e_hat;
  count_trimmed(fit);
  return fit;
}

}  // namespace sensaipw
