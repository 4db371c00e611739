#include "glm_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "sensaipw/mathfn.hpp"

namespace sensaipw::detail {
namespace {

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

double log_norm_cdf(double x) {
  if (x < -5.0) {
    return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi) - std::log(inv_mills(x));
  }
  if (x > 5.0) return std::log1p(-norm_cdf(-x));
  return std::log(norm_cdf(x));
}

}  // namespace

double probit_loglik(double t, double eta) {
  return t > 0.5 ? log_norm_cdf(eta) : log_norm_cdf(-eta);
}

StandardizedDesign standardize(const Eigen::MatrixXd& values, bool has_intercept) {
  StandardizedDesign out;
  out.intercept = has_intercept;
  out.design_cols = values.cols();
  const Index n = values.rows();
  const Index first = has_intercept ? 1 : 0;

  std::vector<Index> usable;
  std::vector<double> centers;
  std::vector<double> scales;
  for (Index j = first; j < values.cols(); ++j) {
    const double center = has_intercept ? values.col(j).mean() : 0.0;
    const double ms = (values.col(j).array() - center).square().sum() / static_cast<double>(n);
    const double scale = std::sqrt(ms);
    if (!(scale > 1e-10 * (1.0 + std::fabs(center)))) continue;
    usable.push_back(j);
    centers.push_back(center);
    scales.push_back(scale);
  }

  const Index p = static_cast<Index>(usable.size());
  out.x.resize(n, p);
  out.center.resize(p);
  out.scale.resize(p);
  out.source = usable;
  for (Index k = 0; k < p; ++k) {
    out.center(k) = centers[k];
    out.scale(k) = scales[k];
    out.x.col(k) = (values.col(usable[k]).array() - centers[k]) / scales[k];
  }
  return out;
}

Eigen::VectorXd design_coefficients(const StandardizedDesign& design, const GlmState& state) {
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(design.design_cols);
  double intercept = state.b0;
  for (Index k = 0; k < design.x.cols(); ++k) {
    if (state.beta(k) == 0.0) continue;
    const double b = state.beta(k) / design.scale(k);
    coef(design.source[k]) = b;
    intercept -= b * design.center(k);
  }
  if (design.intercept) coef(0) = intercept;
  return coef;
}

GlmProblem::GlmProblem(const StandardizedDesign& design, const Eigen::VectorXd& response,
                       Family family, Eigen::VectorXd penalty_weights)
    : design_(design), response_(response), family_(family), weights_(std::move(penalty_weights)) {}

GlmProblem::GlmProblem(const StandardizedDesign& design, const Eigen::VectorXd& response,
                       Family family)
    : GlmProblem(design, response, family, Eigen::VectorXd::Ones(design.x.cols())) {}

GlmState GlmProblem::null_state() const {
  GlmState state;
  state.beta = Eigen::VectorXd::Zero(design_.x.cols());
  if (!design_.intercept) return state;
  const double mean = response_.mean();
  if (family_ == Family::Gaussian) {
    state.b0 = mean;
  } else {
    const double p = std::clamp(mean, 1e-12, 1.0 - 1e-12);
    state.b0 = norm_quantile(p);
  }
  return state;
}

Eigen::VectorXd GlmProblem::linear_predictor(const GlmState& state) const {
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(n(), state.b0);
  for (Index k = 0; k < state.beta.size(); ++k) {
    if (state.beta(k) != 0.0) eta.noalias() += state.beta(k) * design_.x.col(k);
  }
  return eta;
}

double GlmProblem::deviance(const Eigen::VectorXd& eta) const {
  if (family_ == Family::Gaussian) return (response_ - eta).squaredNorm();
  double ll = 0.0;
  for (Index i = 0; i < n(); ++i) ll += probit_loglik(response_(i), eta(i));
  return -2.0 * ll;
}

double GlmProblem::objective(const Eigen::VectorXd& eta, const GlmState& state,
                             double lambda) const {
  double pen = 0.0;
  for (Index k = 0; k < state.beta.size(); ++k) {
    if (state.beta(k) != 0.0) pen += weights_(k) * std::fabs(state.beta(k));
  }
  pen = pen == 0.0 ? 0.0 : lambda * pen;
  return 0.5 * deviance(eta) / static_cast<double>(n()) + pen;
}

void GlmProblem::working(const Eigen::VectorXd& eta, Eigen::VectorXd& score,
                         Eigen::VectorXd& weight) const {
  const Index m = n();
  score.resize(m);
  weight.resize(m);
  if (family_ == Family::Gaussian) {
    score = response_ - eta;
    weight.setOnes();
    return;
  }
  for (Index i = 0; i < m; ++i) {
    const double up = inv_mills(eta(i));
    const double down = inv_mills(-eta(i));
    weight(i) = std::max(up * down, 1e-300);
    score(i) = response_(i) > 0.5 ? up : -down;
  }
}

Eigen::VectorXd GlmProblem::gradient(const Eigen::VectorXd& eta) const {
  Eigen::VectorXd s;
  Eigen::VectorXd w;
  working(eta, s, w);
  Eigen::VectorXd g = design_.x.transpose() * s;
  g /= static_cast<double>(n());
  return g;
}

double GlmProblem::lambda_max() const {
  const GlmState null = null_state();
  const Eigen::VectorXd g = gradient(linear_predictor(null));
  double best = 0.0;
  for (Index k = 0; k < g.size(); ++k) {
    if (weights_(k) > 0.0 && std::isfinite(weights_(k))) best = std::max(best, std::fabs(g(k)) / weights_(k));
  }
  return best;
}

SolveStatus GlmProblem::solve(double lambda, GlmState& state, std::span<const Index> candidates,
                              const EngineOptions& options) const {
  SolveStatus status;
  const Index m = n();
  const double inv_n = 1.0 / static_cast<double>(m);
  const auto& x = design_.x;
  if (state.beta.size() != x.cols()) state.beta = Eigen::VectorXd::Zero(x.cols());

  Eigen::VectorXd eta = linear_predictor(state);
  Eigen::VectorXd score;
  Eigen::VectorXd weight;
  Eigen::VectorXd curvature(x.cols());
  const bool unit_weights = family_ == Family::Gaussian;

  for (int outer = 0; outer < options.max_newton; ++outer) {
    status.newton_iterations = outer + 1;
    working(eta, score, weight);
    const double f_old = family_ == Family::Probit ? objective(eta, state, lambda) : 0.0;

    for (Index j : candidates) {
      curvature(j) = unit_weights ? x.col(j).squaredNorm() * inv_n
                                  : x.col(j).cwiseAbs2().dot(weight) * inv_n;
    }
    const double w_sum = weight.sum();
    const double curv0 = w_sum * inv_n;

    GlmState next = state;
    Eigen::VectorXd wr = score;  // weighted residual of the local quadratic model

    auto update_intercept = [&]() {
      if (!design_.intercept) return 0.0;
      const double d = wr.sum() / w_sum;
      if (d == 0.0) return 0.0;
      if (unit_weights) {
        wr.array() -= d;
      } else {
        wr.noalias() -= d * weight;
      }
      next.b0 += d;
      return std::fabs(d) * std::sqrt(curv0);
    };
    auto update = [&](Index j) {
      const double v = curvature(j);
      if (!(v > 0.0)) return 0.0;
      const double g = x.col(j).dot(wr) * inv_n + v * next.beta(j);
      const double nb = soft_threshold(g, lambda * weights_(j)) / v;
      const double d = nb - next.beta(j);
      if (d == 0.0) return 0.0;
      if (unit_weights) {
        wr.noalias() -= d * x.col(j);
      } else {
        wr.noalias() -= d * x.col(j).cwiseProduct(weight);
      }
      next.beta(j) = nb;
      return std::fabs(d) * std::sqrt(v);
    };

    int sweeps = 0;
    bool inner_converged = false;
    std::vector<Index> active;
    while (sweeps < options.max_sweeps) {
      double change = update_intercept();
      for (Index j : candidates) change = std::max(change, update(j));
      ++sweeps;
      if (change < options.tolerance) {
        inner_converged = true;
        break;
      }
      active.clear();
      for (Index j : candidates) {
        if (next.beta(j) != 0.0) active.push_back(j);
      }
      while (sweeps < options.max_sweeps) {
        double c = update_intercept();
        for (Index j : active) c = std::max(c, update(j));
        ++sweeps;
        if (c < options.tolerance) break;
      }
    }

    Eigen::VectorXd d_eta = Eigen::VectorXd::Constant(m, next.b0 - state.b0);
    double max_change = std::fabs(next.b0 - state.b0) * std::sqrt(curv0);
    for (Index j : candidates) {
      const double d = next.beta(j) - state.beta(j);
      if (d == 0.0) continue;
      d_eta.noalias() += d * x.col(j);
      max_change = std::max(max_change, std::fabs(d) * std::sqrt(curvature(j)));
    }

    if (family_ == Family::Gaussian) {
      state = std::move(next);
      status.converged = inner_converged;
      return status;
    }

    // Backtracking on the penalized objective.
    double step = 1.0;
    GlmState trial = next;
    Eigen::VectorXd eta_trial = eta + d_eta;
    double f_new = objective(eta_trial, trial, lambda);
    int halvings = 0;
    while (!(f_new <= f_old + 1e-12 * std::max(1.0, std::fabs(f_old))) && halvings < 40) {
      step *= 0.5;
      ++halvings;
      trial.b0 = state.b0 + step * (next.b0 - state.b0);
      trial.beta = state.beta + step * (next.beta - state.beta);
      eta_trial = eta + step * d_eta;
      f_new = objective(eta_trial, trial, lambda);
    }
    if (halvings == 40) {
      // No descent available at working precision: current point is optimal.
      status.converged = true;
      return status;
    }
    state = std::move(trial);
    eta = std::move(eta_trial);
    max_change *= step;

    if (std::fabs(state.b0) > options.divergence_cap ||
        (state.beta.size() > 0 && state.beta.cwiseAbs().maxCoeff() > options.divergence_cap)) {
      status.converged = false;
      status.diverged = true;
      return status;
    }
    if (max_change < options.tolerance ||
        f_old - f_new <= 1e-15 * std::max(1.0, std::fabs(f_new))) {
      status.converged = inner_converged;
      return status;
    }
  }
  status.converged = false;
  return status;
}

SolveStatus GlmProblem::solve_kkt(double lambda, GlmState& state, std::vector<Index> candidates,
                                  const EngineOptions& options) const {
  std::vector<char> in_set(design_.x.cols(), 0);
  for (Index j : candidates) in_set[j] = 1;
  for (;;) {
    SolveStatus status = solve(lambda, state, candidates, options);
    if (status.diverged) return status;
    const Eigen::VectorXd g = gradient(linear_predictor(state));
    bool added = false;
    for (Index j = 0; j < g.size(); ++j) {
      if (in_set[j]) continue;
      if (std::fabs(g(j)) > lambda * weights_(j) * (1.0 + 1e-9)) {
        candidates.push_back(j);
        in_set[j] = 1;
        added = true;
      }
    }
    if (!added) return status;
    std::sort(candidates.begin(), candidates.end());
  }
}

std::vector<double> lambda_sequence(double lambda_max, int length, double ratio) {
  std::vector<double> out;
  if (length <= 1) {
    out.push_back(lambda_max);
    return out;
  }
  out.reserve(length);
  const double log_step = std::log(ratio) / static_cast<double>(length - 1);
  for (int k = 0; k < length; ++k) out.push_back(lambda_max * std::exp(log_step * k));
  return out;
}

PathWalker::PathWalker(const GlmProblem& problem, const EngineOptions& options)
    : problem_(problem), options_(options), state_(problem.null_state()) {
  eta_ = problem_.linear_predictor(state_);
  null_deviance_ = problem_.deviance(eta_);
  grad_ = problem_.gradient(eta_);
  previous_ = problem_.lambda_max();
}

bool PathWalker::advance(double lambda) {
  if (done_) return false;
  const auto& weights = problem_.penalty_weights();
  const Index p = grad_.size();
  std::vector<Index> candidates;
  const double cut = 2.0 * lambda - std::max(previous_, lambda);
  for (Index j = 0; j < p; ++j) {
    if (state_.beta(j) != 0.0 || std::fabs(grad_(j)) >= weights(j) * cut) candidates.push_back(j);
  }
  GlmState trial = state_;
  const SolveStatus status = problem_.solve_kkt(lambda, trial, candidates, options_);
  if (status.diverged) {
    done_ = true;
    return false;
  }
  state_ = std::move(trial);
  eta_ = problem_.linear_predictor(state_);
  grad_ = problem_.gradient(eta_);
  const double dev = problem_.deviance(eta_);
  previous_ = lambda;
  ++steps_;
  if (null_deviance_ > 0.0 && steps_ > 5) {
    const double explained = 1.0 - dev / null_deviance_;
    const double gain = (deviance_ - dev) / null_deviance_;
    if (explained > 0.999 || gain < 1e-5 * explained) done_ = true;
  }
  deviance_ = dev;
  return true;
}

PathFit fit_path(const GlmProblem& problem, const std::vector<double>& lambdas,
                 const EngineOptions& options) {
  PathFit path;
  PathWalker walker(problem, options);
  path.null_deviance = walker.null_deviance();
  for (double lambda : lambdas) {
    if (!walker.advance(lambda)) break;
    path.lambdas.push_back(lambda);
    path.states.push_back(walker.state());
    path.deviance.push_back(walker.deviance());
  }
  return path;
}

}  // namespace sensaipw::detail
