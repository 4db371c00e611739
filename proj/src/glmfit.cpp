#include "sensaipw/glmfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <memory>
#include <random>
#include <stdexcept>

#include "glm_engine.hpp"
#include "sensaipw/errors.hpp"
#include "sensaipw/mathfn.hpp"

namespace sensaipw {

using detail::Family;
using detail::GlmProblem;
using detail::GlmState;
using detail::StandardizedDesign;

DesignMatrix DesignMatrix::with_intercept(const Eigen::MatrixXd& covariates,
                                          const std::vector<std::string>& names) {
  DesignMatrix out;
  out.values.resize(covariates.rows(), covariates.cols() + 1);
  out.values.col(0).setOnes();
  out.values.rightCols(covariates.cols()) = covariates;
  out.has_intercept = true;
  out.column_names.reserve(names.size() + 1);
  out.column_names.push_back("(Intercept)");
  for (const auto& name : names) out.column_names.push_back(name);
  while (static_cast<Index>(out.column_names.size()) < out.values.cols()) {
    out.column_names.push_back("x" + std::to_string(out.column_names.size()));
  }
  return out;
}

void DesignMatrix::validate() const {
  if (values.rows() < 2) throw std::invalid_argument("design matrix needs at least 2 rows");
  if (values.cols() < 1) throw std::invalid_argument("design matrix has no columns");
  if (!values.allFinite()) throw std::invalid_argument("design matrix has non-finite entries");
  if (static_cast<Index>(column_names.size()) != values.cols()) {
    throw std::invalid_argument("design matrix column names do not match its width");
  }
  if (has_intercept && !(values.col(0).array() == 1.0).all()) {
    throw std::invalid_argument("intercept column is not constant 1");
  }
}

DesignMatrix DesignMatrix::subset(std::span<const Index> rows) const {
  DesignMatrix out;
  out.values.resize(static_cast<Index>(rows.size()), values.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.values.row(static_cast<Index>(i)) = values.row(rows[i]);
  out.has_intercept = has_intercept;
  out.column_names = column_names;
  return out;
}

Penalty Penalty::fixed(double value) {
  if (!(value >= 0.0)) throw std::invalid_argument("penalty must be nonnegative");
  return Penalty(false, value);
}

Eigen::VectorXd ProbitFit::propensity(const DesignMatrix& x) const {
  Eigen::VectorXd g = index(x);
  for (Index i = 0; i < g.size(); ++i) g(i) = norm_cdf(g(i));
  return g;
}

namespace {

detail::EngineOptions engine_options(const LassoOptions& o) {
  detail::EngineOptions e;
  e.tolerance = o.tolerance;
  e.max_sweeps = o.max_sweeps;
  e.max_newton = o.max_newton;
  e.divergence_cap = o.divergence_cap;
  return e;
}

std::vector<Index> all_columns(const StandardizedDesign& st) {
  std::vector<Index> out(static_cast<std::size_t>(st.x.cols()));
  std::iota(out.begin(), out.end(), Index{0});
  return out;
}

std::vector<Index> support(const DesignMatrix& x, const Eigen::VectorXd& coef) {
  std::vector<Index> out;
  for (Index j = x.has_intercept ? 1 : 0; j < coef.size(); ++j) {
    if (coef(j) != 0.0) out.push_back(j);
  }
  return out;
}

void check_response(const DesignMatrix& x, const Eigen::VectorXd& y) {
  x.validate();
  if (y.size() != x.rows()) throw std::invalid_argument("response length does not match design rows");
  if (!y.allFinite()) throw std::invalid_argument("response has non-finite entries");
}

void check_binary(const Eigen::VectorXd& t) {
  bool has0 = false;
  bool has1 = false;
  for (Index i = 0; i < t.size(); ++i) {
    if (t(i) == 0.0) {
      has0 = true;
    } else if (t(i) == 1.0) {
      has1 = true;
    } else {
      throw DataError("treatment must be coded 0/1");
    }
  }
  if (!has0 || !has1) throw DataError("treatment vector contains a single class");
}

struct CvChoice {
  double lambda = 0.0;
  GlmState state;
};

struct Fold {
  std::vector<Index> test;
  Eigen::VectorXd response;
  StandardizedDesign design;
  std::unique_ptr<GlmProblem> problem;
  std::unique_ptr<detail::PathWalker> walker;
};

// K-fold cross-validation over a lambda path, minimizing mean held-out
// deviance (squared error for the Gaussian family). All fold paths advance
// together; the walk stops once the held-out loss has stayed above its
// minimum for cv_patience consecutive lambdas, or when any path ends.
CvChoice cross_validate(const DesignMatrix& x, const Eigen::VectorXd& y, Family family,
                        const LassoOptions& options) {
  auto eng = engine_options(options);
  eng.tolerance = std::max(options.tolerance, options.path_tolerance);
  const StandardizedDesign st = detail::standardize(x.values, x.has_intercept);
  const GlmProblem problem(st, y, family);
  const Index n = x.rows();
  const double lam_max = problem.lambda_max();
  if (!(lam_max > 0.0)) return {0.0, problem.null_state()};
  const double ratio = n < st.x.cols() ? 0.01 : 1e-4;
  const auto lambdas = detail::lambda_sequence(lam_max, options.path_length, ratio);

  const int k_folds = std::clamp<int>(options.cv_folds, 2, static_cast<int>(n));
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(options.fold_seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) fold_of[order[i]] = static_cast<int>(i % k_folds);

  std::vector<Fold> folds;
  for (int f = 0; f < k_folds; ++f) {
    Fold fold;
    std::vector<Index> train;
    for (Index i = 0; i < n; ++i) (fold_of[i] == f ? fold.test : train).push_back(i);
    if (fold.test.empty()) continue;
    fold.response.resize(static_cast<Index>(train.size()));
    for (std::size_t i = 0; i < train.size(); ++i) fold.response(static_cast<Index>(i)) = y(train[i]);
    if (family == Family::Probit) {
      const double s = fold.response.sum();
      if (s == 0.0 || s == static_cast<double>(fold.response.size())) continue;
    }
    fold.design = detail::standardize(x.subset(train).values, x.has_intercept);
    folds.push_back(std::move(fold));
  }
  for (auto& fold : folds) {
    fold.problem = std::make_unique<GlmProblem>(fold.design, fold.response, family);
    fold.walker = std::make_unique<detail::PathWalker>(*fold.problem, eng);
  }

  struct Step {
    CvChoice choice;
    double mean = 0.0;  // held-out loss per observation
    double se = 0.0;    // standard error of the fold means
  };
  std::vector<Step> steps;
  std::size_t best = 0;
  int since_best = 0;
  detail::PathWalker full(problem, eng);
  for (double lambda : lambdas) {
    if (!full.advance(lambda)) break;
    std::vector<double> fold_loss;
    double loss = 0.0;
    double weight = 0.0;
    bool complete = true;
    for (auto& fold : folds) {
      if (!fold.walker->advance(lambda)) {
        complete = false;
        break;
      }
      const Eigen::VectorXd coef = detail::design_coefficients(fold.design, fold.walker->state());
      double l = 0.0;
      for (Index i : fold.test) {
        const double eta = x.values.row(i).dot(coef);
        l += family == Family::Gaussian ? (y(i) - eta) * (y(i) - eta) : -2.0 * detail::probit_loglik(y(i), eta);
      }
      loss += l;
      weight += static_cast<double>(fold.test.size());
      fold_loss.push_back(l / static_cast<double>(fold.test.size()));
    }
    if (!complete || folds.empty()) break;
    Step step{{lambda, full.state()}, loss / weight, 0.0};
    if (folds.size() > 1) {
      double ss = 0.0;
      for (std::size_t f = 0; f < folds.size(); ++f) {
        ss += static_cast<double>(folds[f].test.size()) * std::pow(fold_loss[f] - step.mean, 2);
      }
      step.se = std::sqrt(ss / weight / static_cast<double>(folds.size() - 1));
    }
    steps.push_back(std::move(step));
    if (steps.size() == 1 || steps.back().mean < steps[best].mean) {
      best = steps.size() - 1;
      since_best = 0;
    } else if (++since_best >= options.cv_patience) {
      break;
    }
    if (full.done()) break;
    bool fold_done = false;
    for (const auto& fold : folds) fold_done = fold_done || fold.walker->done();
    if (fold_done) break;
  }

  if (steps.empty()) return {lam_max, problem.null_state()};
  std::size_t pick = best;
  if (options.cv_one_se) {
    const double limit = steps[best].mean + steps[best].se;
    pick = 0;
    while (steps[pick].mean > limit) ++pick;
  }
  CvChoice chosen = std::move(steps[pick].choice);
  // polish the chosen fit at the full-precision tolerance
  problem.solve_kkt(chosen.lambda, chosen.state, all_columns(st), engine_options(options));
  return chosen;
}

// Initial residuals for the plug-in rule: least squares on the five columns
// most correlated with the response.
Eigen::VectorXd plugin_initial_residuals(const StandardizedDesign& st, const Eigen::VectorXd& y) {
  const Index n = y.size();
  const Eigen::VectorXd yc = st.intercept ? Eigen::VectorXd(y.array() - y.mean()) : y;
  const Index p = st.x.cols();
  if (p == 0) return yc;
  Eigen::VectorXd corr = (st.x.transpose() * yc).cwiseAbs();
  std::vector<Index> idx(static_cast<std::size_t>(p));
  std::iota(idx.begin(), idx.end(), Index{0});
  const Index take = std::min<Index>(5, p);
  std::partial_sort(idx.begin(), idx.begin() + take, idx.end(),
                    [&](Index a, Index b) { return corr(a) > corr(b) || (corr(a) == corr(b) && a < b); });
  Eigen::MatrixXd z(n, take);
  for (Index k = 0; k < take; ++k) z.col(k) = st.x.col(idx[k]);
  const Eigen::VectorXd b = z.completeOrthogonalDecomposition().solve(yc);
  return yc - z * b;
}

Eigen::VectorXd loadings(const StandardizedDesign& st, const Eigen::VectorXd& e) {
  const Eigen::VectorXd e2 = e.cwiseAbs2();
  Eigen::VectorXd psi(st.x.cols());
  for (Index j = 0; j < st.x.cols(); ++j) {
    psi(j) = std::sqrt(st.x.col(j).cwiseAbs2().dot(e2) / static_cast<double>(e.size()));
  }
  return psi;
}

// Post-lasso residuals on the standardized design.
Eigen::VectorXd post_residuals(const StandardizedDesign& st, const Eigen::VectorXd& y,
                               const GlmState& state) {
  std::vector<Index> sel;
  for (Index j = 0; j < state.beta.size(); ++j) {
    if (state.beta(j) != 0.0) sel.push_back(j);
  }
  const Index n = y.size();
  const Index k = static_cast<Index>(sel.size()) + (st.intercept ? 1 : 0);
  if (k == 0) return y;
  Eigen::MatrixXd z(n, k);
  Index c = 0;
  if (st.intercept) z.col(c++).setOnes();
  for (Index j : sel) z.col(c++) = st.x.col(j);
  const Eigen::VectorXd b = z.completeOrthogonalDecomposition().solve(y);
  return y - z * b;
}

struct PluginResult {
  bool ok = false;
  double lambda = 0.0;
  GlmState state;
};

PluginResult plugin_lasso(const DesignMatrix& x, const StandardizedDesign& st,
                          const Eigen::VectorXd& y, const LassoOptions& options) {
  PluginResult out;
  const Index n = x.rows();
  const Index p = std::max<Index>(1, x.cols() - (x.has_intercept ? 1 : 0));
  const double gamma =
      options.plugin_gamma > 0.0 ? options.plugin_gamma : 0.1 / std::log(static_cast<double>(n));
  const double lambda = options.plugin_c *
                        norm_quantile(1.0 - gamma / (2.0 * static_cast<double>(p))) /
                        std::sqrt(static_cast<double>(n));
  const auto eng = engine_options(options);

  Eigen::VectorXd psi = loadings(st, plugin_initial_residuals(st, y));
  GlmState state;
  for (int it = 0; it < std::max(1, options.plugin_iterations); ++it) {
    if (!psi.allFinite() || (psi.size() > 0 && psi.maxCoeff() <= 0.0)) return out;
    const GlmProblem problem(st, y, Family::Gaussian, psi);
    state = problem.null_state();
    const auto status = problem.solve_kkt(lambda, state, all_columns(st), eng);
    if (!status.converged) return out;
    const Eigen::VectorXd next = loadings(st, post_residuals(st, y, state));
    const double change = psi.size() > 0 ? (next - psi).cwiseAbs().maxCoeff() : 0.0;
    if (change < options.plugin_tolerance) break;
    psi = next;
  }
  out.ok = true;
  out.lambda = lambda;
  out.state = std::move(state);
  return out;
}

struct NewtonResult {
  Eigen::VectorXd coef;
  bool converged = false;
  int iterations = 0;
  std::string failure;
};

// Probit MLE on the columns of z by Newton-Raphson with Fisher weights and
// step halving. intercept_col < 0 when z has no intercept column.
NewtonResult probit_newton(const Eigen::MatrixXd& z, const Eigen::VectorXd& t, Index intercept_col,
                           const LassoOptions& options) {
  const Index n = z.rows();
  const Index q = z.cols();
  NewtonResult out;
  out.coef = Eigen::VectorXd::Zero(q);
  if (intercept_col >= 0) out.coef(intercept_col) = norm_quantile(std::clamp(t.mean(), 1e-12, 1 - 1e-12));

  Eigen::VectorXd scale(q);
  for (Index j = 0; j < q; ++j) {
    const double mean = z.col(j).mean();
    const double sd = std::sqrt((z.col(j).array() - mean).square().mean());
    scale(j) = j == intercept_col || sd <= 0.0 ? 1.0 : sd;
  }

  auto loglik = [&](const Eigen::VectorXd& eta) {
    double ll = 0.0;
    for (Index i = 0; i < n; ++i) ll += detail::probit_loglik(t(i), eta(i));
    return ll;
  };

  Eigen::VectorXd eta = z * out.coef;
  double ll = loglik(eta);
  Eigen::VectorXd s(n);
  Eigen::VectorXd w(n);
  for (int it = 0; it < 100; ++it) {
    out.iterations = it + 1;
    for (Index i = 0; i < n; ++i) {
      const double up = inv_mills(eta(i));
      const double down = inv_mills(-eta(i));
      w(i) = std::max(up * down, 1e-300);
      s(i) = t(i) > 0.5 ? up : -down;
    }
    const Eigen::VectorXd score = z.transpose() * s;
    const Eigen::MatrixXd info = z.transpose() * w.asDiagonal() * z;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      out.failure = "singular information matrix";
      return out;
    }
    const Eigen::VectorXd delta = ldlt.solve(score);
    if (!delta.allFinite()) {
      out.failure = "non-finite Newton step";
      return out;
    }
    const double step_size = delta.cwiseProduct(scale).cwiseAbs().maxCoeff();
    if (score.cwiseAbs().maxCoeff() / static_cast<double>(n) < 1e-8 && step_size < 1e-6) {
      out.converged = true;
      return out;
    }
    double step = 1.0;
    Eigen::VectorXd trial = out.coef + delta;
    Eigen::VectorXd eta_trial = z * trial;
    double ll_trial = loglik(eta_trial);
    int halvings = 0;
    while (!(ll_trial >= ll - 1e-12 * std::max(1.0, std::fabs(ll))) && halvings < 40) {
      step *= 0.5;
      ++halvings;
      trial = out.coef + step * delta;
      eta_trial = z * trial;
      ll_trial = loglik(eta_trial);
    }
    if (halvings == 40) {
      out.converged = score.cwiseAbs().maxCoeff() / static_cast<double>(n) < 1e-8;
      if (!out.converged) out.failure = "line search failed";
      return out;
    }
    out.coef = std::move(trial);
    eta = std::move(eta_trial);
    ll = ll_trial;
    if (out.coef.cwiseProduct(scale).cwiseAbs().maxCoeff() > options.divergence_cap) {
      out.failure = "coefficients diverge (separation)";
      return out;
    }
  }
  out.failure = "no convergence within 100 Newton iterations (separation?)";
  return out;
}

std::vector<Index> checked_selection(const DesignMatrix& x, std::span<const Index> selected) {
  std::vector<Index> cols(selected.begin(), selected.end());
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  const Index first = x.has_intercept ? 1 : 0;
  for (Index j : cols) {
    if (j < first || j >= x.cols()) throw std::invalid_argument("selected column out of range");
  }
  return cols;
}

Eigen::MatrixXd gather_columns(const DesignMatrix& x, const std::vector<Index>& cols) {
  Eigen::MatrixXd z(x.rows(), static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) z.col(static_cast<Index>(k)) = x.values.col(cols[k]);
  return z;
}

std::vector<Index> usable_sources(const StandardizedDesign& st) { return st.source; }

ProbitFit probit_mle(const DesignMatrix& x, const Eigen::VectorXd& t, std::span<const Index> selected,
                     const LassoOptions& options, std::string& failure) {
  std::vector<Index> cols = checked_selection(x, selected);
  const auto chosen = cols;
  if (x.has_intercept) cols.insert(cols.begin(), 0);
  if (static_cast<Index>(cols.size()) >= x.rows()) {
    throw std::invalid_argument("refit needs fewer selected columns than rows");
  }
  const NewtonResult nr =
      probit_newton(gather_columns(x, cols), t, x.has_intercept ? 0 : -1, options);
  ProbitFit fit;
  fit.coefficients = Eigen::VectorXd::Zero(x.cols());
  for (std::size_t k = 0; k < cols.size(); ++k) fit.coefficients(cols[k]) = nr.coef(static_cast<Index>(k));
  fit.selected = chosen;
  fit.converged = nr.converged;
  fit.iterations = nr.iterations;
  failure = nr.failure;
  return fit;
}

}  // namespace

LinearFit refit_linear(const DesignMatrix& x, const Eigen::VectorXd& y,
                       std::span<const Index> selected) {
  check_response(x, y);
  std::vector<Index> cols = checked_selection(x, selected);
  LinearFit fit;
  fit.selected = cols;
  if (x.has_intercept) cols.insert(cols.begin(), 0);
  if (static_cast<Index>(cols.size()) >= x.rows()) {
    throw std::invalid_argument("refit needs fewer selected columns than rows");
  }
  fit.coefficients = Eigen::VectorXd::Zero(x.cols());
  if (cols.empty()) return fit;
  const Eigen::MatrixXd z = gather_columns(x, cols);
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(z);
  const Eigen::VectorXd b = cod.solve(y);
  if (cod.rank() < z.cols()) {
    fit.warnings.push_back("refit_linear: design of rank " + std::to_string(cod.rank()) + " with " +
                           std::to_string(z.cols()) + " columns; minimum-norm solution used");
  }
  for (std::size_t k = 0; k < cols.size(); ++k) fit.coefficients(cols[k]) = b(static_cast<Index>(k));
  return fit;
}

ProbitFit refit_probit(const DesignMatrix& x, const Eigen::VectorXd& t,
                       std::span<const Index> selected, const LassoOptions& options) {
  check_response(x, t);
  check_binary(t);
  std::string failure;
  ProbitFit fit = probit_mle(x, t, selected, options, failure);
  if (!fit.converged) throw ConvergenceError("refit_probit: " + failure);
  return fit;
}

LinearFit lasso_linear(const DesignMatrix& x, const Eigen::VectorXd& y, Penalty penalty,
                       const LassoOptions& options) {
  check_response(x, y);
  const StandardizedDesign st = detail::standardize(x.values, x.has_intercept);

  if (!penalty.is_auto() && penalty.value() == 0.0) {
    LinearFit fit = refit_linear(x, y, usable_sources(st));
    fit.selected = support(x, fit.coefficients);
    return fit;
  }

  LinearFit fit;
  GlmState state;
  if (penalty.is_auto()) {
    PluginResult pr = plugin_lasso(x, st, y, options);
    if (pr.ok) {
      fit.penalty = pr.lambda;
      state = std::move(pr.state);
    } else {
      fit.warnings.push_back("lasso_linear: plug-in loadings degenerate; using cross-validation");
      CvChoice cv = cross_validate(x, y, Family::Gaussian, options);
      fit.penalty = cv.lambda;
      state = std::move(cv.state);
    }
  } else {
    const GlmProblem problem(st, y, Family::Gaussian);
    state = problem.null_state();
    const auto status = problem.solve_kkt(penalty.value(), state, all_columns(st), engine_options(options));
    fit.converged = status.converged;
    fit.penalty = penalty.value();
  }
  fit.coefficients = detail::design_coefficients(st, state);
  fit.selected = support(x, fit.coefficients);
  return fit;
}

ProbitFit lasso_probit(const DesignMatrix& x, const Eigen::VectorXd& t, Penalty penalty,
                       const LassoOptions& options) {
  check_response(x, t);
  check_binary(t);
  const StandardizedDesign st = detail::standardize(x.values, x.has_intercept);

  if (!penalty.is_auto() && penalty.value() == 0.0) {
    std::string failure;
    ProbitFit fit = probit_mle(x, t, usable_sources(st), options, failure);
    fit.selected = support(x, fit.coefficients);
    if (!fit.converged) fit.warnings.push_back("lasso_probit: " + failure);
    return fit;
  }

  ProbitFit fit;
  GlmState state;
  if (penalty.is_auto()) {
    CvChoice cv = cross_validate(x, t, Family::Probit, options);
    fit.penalty = cv.lambda;
    state = std::move(cv.state);
  } else {
    const GlmProblem problem(st, t, Family::Probit);
    state = problem.null_state();
    const auto status = problem.solve_kkt(penalty.value(), state, all_columns(st), engine_options(options));
    fit.converged = status.converged;
    fit.iterations = status.newton_iterations;
    fit.penalty = penalty.value();
    if (status.diverged) {
      fit.warnings.push_back("lasso_probit: coefficients exceed the divergence cap (quasi-separation)");
    } else if (!status.converged) {
      fit.warnings.push_back("lasso_probit: no convergence");
    }
  }
  fit.coefficients = detail::design_coefficients(st, state);
  fit.selected = support(x, fit.coefficients);
  return fit;
}

}  // namespace sensaipw
