#include "sensaipw/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "sensaipw/errors.hpp"
#include "sensaipw/mathfn.hpp"

namespace sensaipw {

void RhoRange::validate() const {
  if (!(min > -1.0 && max < 1.0 && min <= max)) {
    throw ConfigError("rho range must satisfy -1 < min <= max < 1");
  }
  if (min < max && grid_size < 2) throw ConfigError("rho grid needs at least 2 points");
}

std::vector<double> RhoRange::grid() const {
  validate();
  if (min == max) return {min};
  std::vector<double> out(static_cast<std::size_t>(grid_size));
  const double span = max - min;
  for (int k = 0; k < grid_size; ++k) {
    out[static_cast<std::size_t>(k)] = min + span * static_cast<double>(k) / static_cast<double>(grid_size - 1);
  }
  out.back() = max;
  return out;
}

namespace {

constexpr double kDenominatorFloor = 1e-8;

double mills(double h) {
  if (h == std::numeric_limits<double>::infinity()) return 0.0;
  if (h == -std::numeric_limits<double>::infinity()) return std::numeric_limits<double>::infinity();
  return inv_mills(h);
}

double arm_value(const NuisanceFit& fit) { return fit.arm == Arm::Treated ? 1.0 : 0.0; }

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
}

}  // namespace

double sigma_naive(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit) {
  if (t.size() != y.size() || t.size() != fit.rows()) {
    throw std::invalid_argument("data and nuisance fit are not row-aligned");
  }
  const double a = arm_value(fit);
  double ss = 0.0;
  Index count = 0;
  for (Index i = 0; i < t.size(); ++i) {
    if (t(i) != a) continue;
    const double r = y(i) - fit.m_hat(i);
    ss += r * r;
    ++count;
  }
  if (count < 2) throw DataError("fewer than two rows in the outcome model's arm");
  return std::sqrt(ss / static_cast<double>(count));
}

double sigma_corrected(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit,
                       double rho) {
  const double naive = sigma_naive(t, y, fit);
  if (rho == 0.0) return naive;
  const double a = arm_value(fit);
  double h_lambda = 0.0;
  double lambda_sq = 0.0;
  Index count = 0;
  for (Index i = 0; i < t.size(); ++i) {
    if (t(i) != a) continue;
    const double h = fit.arm_index(i);
    const double l = mills(h);
    h_lambda += l == 0.0 ? 0.0 : h * l;
    lambda_sq += l * l;
    ++count;
  }
  const double nt = static_cast<double>(count);
  const double denom = 1.0 - rho * rho * (h_lambda / nt) - rho * rho * (lambda_sq / nt);
  if (!(denom > kDenominatorFloor)) throw InvalidRho(rho, denom);
  return std::sqrt(naive * naive / denom);
}

BiasEstimate bias_hat(const Eigen::VectorXd& t, const NuisanceFit& fit, double rho, double sigma_hat,
                      TargetParameter target, bool corrected) {
  if (target == TargetParameter::ATE) throw std::invalid_argument("ATE bias is per arm");
  if (target_arm(target) != fit.arm) throw std::invalid_argument("nuisance fit targets the other arm");
  if (t.size() != fit.rows()) throw std::invalid_argument("data and nuisance fit are not row-aligned");
  const Index n = fit.rows();
  double lsum = 0.0;
  for (Index i = 0; i < n; ++i) lsum += mills(fit.arm_index(i));
  double lambda_bar = lsum / static_cast<double>(n);
  if (target == TargetParameter::MeanY1GivenT0) lambda_bar /= 1.0 - t.mean();
  if (target == TargetParameter::MeanY0GivenT1) lambda_bar /= t.mean();

  BiasEstimate b;
  b.rho = rho;
  b.sigma_hat = sigma_hat;
  b.lambda_bar = lambda_bar;
  b.corrected = corrected;
  const double sign = fit.arm == Arm::Treated ? 1.0 : -1.0;
  b.b_hat = rho == 0.0 ? 0.0 : sign * rho * sigma_hat * lambda_bar;
  return b;
}

Interval confidence_interval(const AipwResult& aipw, const BiasEstimate& bias, double alpha) {
  check_alpha(alpha);
  if (!(aipw.v_hat >= 0.0) || aipw.n <= 0) throw std::invalid_argument("invalid variance estimate");
  const double half = norm_quantile(1.0 - alpha / 2.0) * std::sqrt(aipw.v_hat / static_cast<double>(aipw.n));
  const double point = aipw.estimate - bias.b_hat;
  return {point - half, point, point + half};
}

BiasEstimate bias_at(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit,
                     double rho, SigmaMode mode, TargetParameter target) {
  const bool corrected = mode == SigmaMode::Corrected;
  const double sigma = corrected ? sigma_corrected(t, y, fit, rho) : sigma_naive(t, y, fit);
  return bias_hat(t, fit, rho, sigma, target, corrected);
}

namespace {

std::string invalid_warning(const std::vector<double>& rhos, std::size_t total) {
  std::ostringstream os;
  os << "WARNING: " << rhos.size() << " of " << total
     << " grid points skipped because the corrected sigma is undefined there (rho =";
  for (std::size_t k = 0; k < rhos.size() && k < 8; ++k) os << ' ' << rhos[k];
  if (rhos.size() > 8) os << " ...";
  os << ')';
  return os.str();
}

void finish_union(IntervalReport& report) {
  report.ui_lower = std::numeric_limits<double>::infinity();
  report.ui_upper = -std::numeric_limits<double>::infinity();
  for (const auto& row : report.per_rho) {
    report.ui_lower = std::min(report.ui_lower, row.lower);
    report.ui_upper = std::max(report.ui_upper, row.upper);
  }
}

}  // namespace

IntervalReport uncertainty_interval(const Eigen::VectorXd& t, const Eigen::VectorXd& y,
                                    const NuisanceFit& fit, const AipwResult& aipw,
                                    const SensitivitySpec& spec) {
  check_alpha(spec.alpha);
  const auto grid = spec.range.grid();
  IntervalReport report;
  report.target = aipw.target;
  report.estimate = aipw.estimate;
  report.v_hat = aipw.v_hat;
  report.n = aipw.n;
  report.unconfounded = confidence_interval(aipw, BiasEstimate{}, spec.alpha);
  for (double rho : grid) {
    try {
      const auto bias = bias_at(t, y, fit, rho, spec.sigma_mode, aipw.target);
      const auto ci = confidence_interval(aipw, bias, spec.alpha);
      report.per_rho.push_back({rho, std::nullopt, ci.point, ci.lower, ci.upper});
    } catch (const InvalidRho&) {
      report.invalid_rhos.push_back(rho);
    }
  }
  if (report.per_rho.empty()) {
    throw NumericalError("corrected sigma undefined at every rho of the grid for " +
                         std::string(target_name(aipw.target)));
  }
  if (!report.invalid_rhos.empty()) report.warnings.push_back(invalid_warning(report.invalid_rhos, grid.size()));
  finish_union(report);
  return report;
}

IntervalReport estimate_ate(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit1,
                            const NuisanceFit& fit0, const SensitivitySpec& spec1,
                            const SensitivitySpec& spec0, double alpha) {
  check_alpha(alpha);
  const AipwResult a1 = aipw_mean_y1(t, y, fit1);
  const AipwResult a0 = aipw_mean_y0(t, y, fit0);
  AipwResult ate;
  ate.target = TargetParameter::ATE;
  ate.estimate = a1.estimate - a0.estimate;
  ate.psi = a1.psi - a0.psi;
  ate.n = a1.n;
  ate.n_t = a1.n_t;
  ate.v_hat = ate.psi.squaredNorm() / static_cast<double>(ate.n);

  IntervalReport report;
  report.target = TargetParameter::ATE;
  report.estimate = ate.estimate;
  report.v_hat = ate.v_hat;
  report.n = ate.n;
  report.unconfounded = confidence_interval(ate, BiasEstimate{}, alpha);

  auto arm_biases = [&](const NuisanceFit& fit, const SensitivitySpec& spec, TargetParameter target) {
    std::vector<std::pair<double, double>> out;
    std::vector<double> bad;
    const auto grid = spec.range.grid();
    for (double rho : grid) {
      try {
        out.emplace_back(rho, bias_at(t, y, fit, rho, spec.sigma_mode, target).b_hat);
      } catch (const InvalidRho&) {
        bad.push_back(rho);
      }
    }
    if (!bad.empty()) {
      report.warnings.push_back(std::string(target_name(target)) + ": " + invalid_warning(bad, grid.size()));
      report.invalid_rhos.insert(report.invalid_rhos.end(), bad.begin(), bad.end());
    }
    if (out.empty()) {
      throw NumericalError("corrected sigma undefined at every rho of the grid for " +
                           std::string(target_name(target)));
    }
    return out;
  };
  const auto b1 = arm_biases(fit1, spec1, TargetParameter::MeanY1);
  const auto b0 = arm_biases(fit0, spec0, TargetParameter::MeanY0);

  const double half = norm_quantile(1.0 - alpha / 2.0) * std::sqrt(ate.v_hat / static_cast<double>(ate.n));
  report.per_rho.reserve(b1.size() * b0.size());
  for (const auto& [rho1, bias1] : b1) {
    for (const auto& [rho0, bias0] : b0) {
      const double point = (a1.estimate - bias1) - (a0.estimate - bias0);
      report.per_rho.push_back({rho1, rho0, point, point - half, point + half});
    }
  }
  finish_union(report);
  return report;
}

FeasibleInterval feasible_rho_interval(const std::vector<double>& grid, const std::vector<double>& middle,
                                       double lo, double hi) {
  if (grid.size() != middle.size()) throw std::invalid_argument("grid and middle curve differ in length");
  FeasibleInterval out;
  const std::size_t g = grid.size();
  auto ok = [&](std::size_t k) { return middle[k] > lo && middle[k] < hi; };

  struct Component {
    std::size_t first, last;
    double left, right;
  };
  auto crossing = [&](std::size_t outside, std::size_t inside) {
    const double mo = middle[outside];
    if (!std::isfinite(mo)) return grid[inside];
    const double bound = mo <= lo ? lo : hi;
    const double frac = (bound - mo) / (middle[inside] - mo);
    return grid[outside] + frac * (grid[inside] - grid[outside]);
  };

  std::vector<Component> parts;
  for (std::size_t k = 0; k < g;) {
    if (!ok(k)) {
      ++k;
      continue;
    }
    std::size_t e = k;
    while (e + 1 < g && ok(e + 1)) ++e;
    Component c{k, e, grid[k], grid[e]};
    if (k > 0) c.left = crossing(k - 1, k);
    if (e + 1 < g) c.right = crossing(e + 1, e);
    parts.push_back(c);
    k = e + 1;
  }
  if (parts.empty()) {
    out.warnings.push_back("no grid point satisfies the ordering; feasible set is empty");
    return out;
  }
  const Component* chosen = &parts.front();
  if (parts.size() > 1) {
    std::size_t zero = g;
    for (std::size_t k = 0; k < g; ++k) {
      if (zero == g || std::fabs(grid[k]) < std::fabs(grid[zero])) zero = k;
    }
    const Component* with_zero = nullptr;
    for (const auto& c : parts) {
      if (c.first <= zero && zero <= c.last && std::fabs(grid[zero]) < 1e-9) with_zero = &c;
    }
    if (with_zero != nullptr) {
      chosen = with_zero;
    } else {
      for (const auto& c : parts) {
        if (c.right - c.left > chosen->right - chosen->left) chosen = &c;
      }
    }
    out.warnings.push_back("feasible set splits into " + std::to_string(parts.size()) +
                           " pieces; reporting " +
                           (with_zero != nullptr ? "the one containing rho = 0" : "the widest"));
  }
  out.range = std::make_pair(chosen->left, chosen->right);
  return out;
}

RhoBounds derive_rho_bounds(const Eigen::VectorXd& t, const Eigen::VectorXd& y, const NuisanceFit& fit1,
                            const NuisanceFit& fit0, const BoundsOptions& options) {
  if (!(options.step > 0.0) || !(options.rho_min > -1.0 && options.rho_max < 1.0 &&
                                 options.rho_min <= options.rho_max)) {
    throw ConfigError("bounds grid must satisfy -1 < min <= max < 1 with a positive step");
  }
  RhoBounds out;
  const auto count = static_cast<std::size_t>(std::floor((options.rho_max - options.rho_min) / options.step + 1e-9)) + 1;
  for (std::size_t k = 0; k < count; ++k) {
    double rho = options.rho_min + static_cast<double>(k) * options.step;
    if (std::fabs(rho) < 1e-12) rho = 0.0;
    out.grid.push_back(std::min(rho, options.rho_max));
  }

  double s1 = 0.0, s0 = 0.0;
  Index n1 = 0, n0 = 0;
  for (Index i = 0; i < t.size(); ++i) {
    if (t(i) == 1.0) {
      s1 += y(i);
      ++n1;
    } else {
      s0 += y(i);
      ++n0;
    }
  }
  if (n1 == 0 || n0 == 0) throw DataError("both treated and control rows are required");
  out.mean_y_treated = s1 / static_cast<double>(n1);
  out.mean_y_control = s0 / static_cast<double>(n0);

  const AipwResult a10 = aipw_tau10(t, y, fit1);
  const AipwResult a01 = aipw_tau01(t, y, fit0);
  auto curve = [&](const NuisanceFit& fit, const AipwResult& a, std::vector<double>& middle) {
    for (double rho : out.grid) {
      try {
        middle.push_back(a.estimate - bias_at(t, y, fit, rho, options.sigma_mode, a.target).b_hat);
      } catch (const InvalidRho&) {
        middle.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
  };
  curve(fit1, a10, out.middle1);
  curve(fit0, a01, out.middle0);
  out.rho1 = feasible_rho_interval(out.grid, out.middle1, out.mean_y_treated, out.mean_y_control);
  out.rho0 = feasible_rho_interval(out.grid, out.middle0, out.mean_y_treated, out.mean_y_control);
  return out;
}

}  // namespace sensaipw
