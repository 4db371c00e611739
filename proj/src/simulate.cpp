#include "sensaipw/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "sensaipw/aipw.hpp"
#include "sensaipw/csv.hpp"
#include "sensaipw/errors.hpp"
#include "sensaipw/mathfn.hpp"
#include "sensaipw/sensitivity.hpp"

namespace sensaipw {

std::string_view estimator_name(BiasEstimator e) {
  switch (e) {
    case BiasEstimator::OracleBias: return "oracle";
    case BiasEstimator::PlugInBias: return "plugin";
    case BiasEstimator::CorrectedBias: return "corrected";
  }
  return "unknown";
}

BiasEstimator parse_estimator(std::string_view name) {
  for (auto e : {BiasEstimator::OracleBias, BiasEstimator::PlugInBias, BiasEstimator::CorrectedBias}) {
    if (estimator_name(e) == name) return e;
  }
  throw ConfigError("unknown estimator '" + std::string(name) + "' (expected oracle, plugin or corrected)");
}

namespace {

Eigen::VectorXd sparse_pattern(Index p, double scale, const double (&head)[10]) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
  for (Index j = 0; j < std::min<Index>(p, 10); ++j) v(j) = scale * head[j];
  return v;
}

}  // namespace

Eigen::VectorXd SimScenario::default_beta(Index p) {
  static const double head[10] = {1.0, 1.0 / 2, 1.0 / 3, 1.0 / 4, 1.0 / 5,
                                  1.0, 1.0 / 2, 1.0 / 3, 1.0 / 4, 1.0 / 5};
  return sparse_pattern(p, 0.6, head);
}

Eigen::VectorXd SimScenario::default_gamma(Index p) {
  static const double head[10] = {1.0, 1.0 / 2, 1.0 / 3, 1.0 / 4, 1.0 / 5, 1.0, 1.0, 1.0, 1.0, 1.0};
  return sparse_pattern(p, 0.3, head);
}

Eigen::VectorXd SimScenario::beta_vector() const { return beta.size() > 0 ? beta : default_beta(dim()); }

Eigen::VectorXd SimScenario::gamma_vector() const { return gamma.size() > 0 ? gamma : default_gamma(dim()); }

void SimScenario::validate() const {
  if (n < 4) throw ConfigError("simulation needs n >= 4");
  if (n_reps < 1) throw ConfigError("n_reps must be at least 1");
  if (!(rho > -1.0 && rho < 1.0)) throw ConfigError("rho must lie in (-1, 1)");
  if (rho0 && !(*rho0 > -1.0 && *rho0 < 1.0)) throw ConfigError("rho0 must lie in (-1, 1)");
  if (beta.size() > 0 && beta.size() != dim()) throw ConfigError("beta length differs from p");
  if (gamma.size() > 0 && gamma.size() != dim()) throw ConfigError("gamma length differs from p");
  if (beta0.size() > 0 && beta0.size() != dim()) throw ConfigError("beta0 length differs from p");
  if (estimators.empty()) throw ConfigError("no estimators requested");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
}

SimDraw generate(const SimScenario& scenario, std::uint64_t rep_index) {
  scenario.validate();
  const Index n = scenario.n;
  const Index p = scenario.dim();
  std::seed_seq seq{static_cast<std::uint32_t>(scenario.seed), static_cast<std::uint32_t>(scenario.seed >> 32),
                    static_cast<std::uint32_t>(rep_index), static_cast<std::uint32_t>(rep_index >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> z;

  SimDraw d;
  Eigen::MatrixXd x(n, p);
  for (Index j = 0; j < p; ++j) {
    for (Index i = 0; i < n; ++i) x(i, j) = z(rng);
  }
  d.eta.resize(n);
  d.xi.resize(n);
  const double rho = scenario.rho;
  const double tail = std::sqrt(1.0 - rho * rho);
  for (Index i = 0; i < n; ++i) {
    const double a = z(rng);
    const double b = z(rng);
    d.eta(i) = a;
    d.xi(i) = rho * a + tail * b;
  }

  const Eigen::VectorXd beta = scenario.beta_vector();
  const Eigen::VectorXd gamma = scenario.gamma_vector();
  d.g_true = x * gamma;
  d.m_true = (x * beta).array() + 2.0;
  d.y1.resize(n);
  d.y0 = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  Eigen::VectorXd t(n);
  for (Index i = 0; i < n; ++i) {
    t(i) = d.g_true(i) + d.eta(i) > 0.0 ? 1.0 : 0.0;
    d.y1(i) = d.m_true(i) - rho * inv_mills(d.g_true(i)) + d.xi(i);
  }
  if (scenario.rho0) {
    const double r0 = *scenario.rho0;
    const double tail0 = std::sqrt(1.0 - r0 * r0);
    const Eigen::VectorXd beta0 = scenario.beta0.size() > 0 ? scenario.beta0 : Eigen::VectorXd::Zero(p);
    const Eigen::VectorXd lin0 = x * beta0;
    for (Index i = 0; i < n; ++i) {
      const double xi0 = r0 * d.eta(i) + tail0 * z(rng);
      d.y0(i) = scenario.intercept0 + lin0(i) + r0 * inv_mills(-d.g_true(i)) + xi0;
    }
  }

  d.data.covariates = std::move(x);
  d.data.treatment = t;
  d.data.outcome.resize(n);
  for (Index i = 0; i < n; ++i) d.data.outcome(i) = t(i) == 1.0 ? d.y1(i) : d.y0(i);
  d.data.columns.reserve(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) {
    const std::string name = "x" + std::to_string(j + 1);
    d.data.columns.push_back({name, name, CovariateKind::Numeric});
  }
  return d;
}

double oracle_mean_lambda(double gamma_norm) {
  static std::mutex mu;
  static std::map<double, double> cache;
  {
    std::lock_guard lock(mu);
    if (auto it = cache.find(gamma_norm); it != cache.end()) return it->second;
  }
  std::mt19937_64 rng(0x6f7261636c65ULL);
  std::normal_distribution<double> z;
  constexpr int kDraws = 1000000;
  double sum = 0.0;
  for (int k = 0; k < kDraws; ++k) sum += inv_mills(gamma_norm * z(rng));
  const double value = sum / kDraws;
  std::lock_guard lock(mu);
  cache.emplace(gamma_norm, value);
  return value;
}

double true_tau(const SimScenario& scenario) {
  if (scenario.rho == 0.0) return 2.0;
  return 2.0 - scenario.rho * oracle_mean_lambda(scenario.gamma_vector().norm());
}

unsigned default_threads() {
  if (const char* env = std::getenv("SENSAIPW_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body) {
  if (threads == 0) threads = default_threads();
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  if (threads <= 1) {
    for (std::size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < count; k = next++) {
          try {
            body(k);
          } catch (...) {
            std::lock_guard lock(error_mu);
            if (!error) error = std::current_exception();
            next = count;
          }
        }
      });
    }
  }
  if (error) std::rethrow_exception(error);
}

namespace {

struct RepOutcome {
  std::vector<int> covered;  // -1 failed, 0 missed, 1 covered
  std::vector<double> width;
};

// One replication for every rho. The draws share X, eta and T across rho
// (only xi depends on it), so the propensity model is fitted once.
std::vector<RepOutcome> run_rep(const SimScenario& base, const std::vector<double>& rhos, std::uint64_t rep,
                                const std::vector<double>& taus, double mean_lambda) {
  const std::size_t k = base.estimators.size();
  std::vector<RepOutcome> out(rhos.size());
  for (auto& o : out) {
    o.covered.assign(k, -1);
    o.width.assign(k, 0.0);
  }
  std::optional<PropensityFit> shared;
  Eigen::VectorXd shared_t;
  for (std::size_t r = 0; r < rhos.size(); ++r) {
    SimScenario scenario = base;
    scenario.rho = rhos[r];
    const SimDraw draw = generate(scenario, rep);
    const Eigen::VectorXd& t = draw.data.treatment;
    const Eigen::VectorXd& y = draw.data.outcome;
    NuisanceFit fit;
    AipwResult a;
    try {
      std::vector<std::string> names;
      for (const auto& c : draw.data.columns) names.push_back(c.name);
      const DesignMatrix x = DesignMatrix::with_intercept(draw.data.covariates, names);
      if (!shared || shared_t != t) {
        shared.reset();
        shared = fit_propensity(x, t, scenario.nuisance);
        shared_t = t;
      }
      fit = fit_nuisance(x, t, y, Arm::Treated, scenario.nuisance, *shared);
      a = aipw_mean_y1(t, y, fit);
    } catch (const NumericalError&) {
      continue;
    } catch (const DataError&) {
      continue;
    }
    for (std::size_t e = 0; e < k; ++e) {
      BiasEstimate b;
      try {
        switch (scenario.estimators[e]) {
          case BiasEstimator::OracleBias:
            b.rho = scenario.rho;
            b.sigma_hat = 1.0;
            b.lambda_bar = mean_lambda;
            b.b_hat = scenario.rho * mean_lambda;
            break;
          case BiasEstimator::PlugInBias:
            b = bias_at(t, y, fit, scenario.rho, SigmaMode::Naive, TargetParameter::MeanY1);
            break;
          case BiasEstimator::CorrectedBias:
            b = bias_at(t, y, fit, scenario.rho, SigmaMode::Corrected, TargetParameter::MeanY1);
            break;
        }
      } catch (const InvalidRho&) {
        continue;
      }
      const Interval ci = confidence_interval(a, b, scenario.alpha);
      out[r].covered[e] = ci.lower <= taus[r] && taus[r] <= ci.upper ? 1 : 0;
      out[r].width[e] = ci.upper - ci.lower;
    }
  }
  return out;
}

}  // namespace

CoverageTable run_coverage(const SimScenario& scenario, unsigned threads) {
  return run_coverage(scenario, std::vector<double>{scenario.rho}, threads);
}

CoverageTable run_coverage(const SimScenario& scenario, const std::vector<double>& rhos, unsigned threads) {
  scenario.validate();
  if (rhos.empty()) throw ConfigError("no rho values requested");
  std::vector<double> taus;
  for (double rho : rhos) {
    SimScenario s = scenario;
    s.rho = rho;
    s.validate();
    taus.push_back(true_tau(s));
  }
  const double mean_lambda = oracle_mean_lambda(scenario.gamma_vector().norm());
  std::vector<std::vector<RepOutcome>> results(static_cast<std::size_t>(scenario.n_reps));
  parallel_for(results.size(), threads, [&](std::size_t rep) {
    results[rep] = run_rep(scenario, rhos, rep, taus, mean_lambda);
  });

  CoverageTable table;
  for (std::size_t r = 0; r < rhos.size(); ++r) {
    for (std::size_t e = 0; e < scenario.estimators.size(); ++e) {
      CoverageRow row;
      row.n = scenario.n;
      row.rho = rhos[r];
      row.estimator = scenario.estimators[e];
      double width = 0.0;
      for (const auto& rep : results) {
        if (rep[r].covered[e] < 0) {
          ++row.failures;
          continue;
        }
        ++row.reps;
        row.covered += rep[r].covered[e];
        width += rep[r].width[e];
      }
      if (row.reps > 0) {
        row.coverage = static_cast<double>(row.covered) / row.reps;
        row.mean_width = width / row.reps;
        row.mc_se = std::sqrt(row.coverage * (1.0 - row.coverage) / row.reps);
      }
      row.flagged = row.reps == 0 || row.failures >= 0.02 * scenario.n_reps;
      table.rows.push_back(row);
    }
  }
  return table;
}

const CoverageRow* CoverageTable::find(Index n, double rho, BiasEstimator e) const {
  for (const auto& r : rows) {
    if (r.n == n && std::fabs(r.rho - rho) < 1e-12 && r.estimator == e) return &r;
  }
  return nullptr;
}

void CoverageTable::append(const CoverageTable& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
}

std::string CoverageTable::to_csv() const {
  CsvTable t;
  t.header = {"n", "rho", "estimator", "reps", "failures", "covered", "coverage", "mean_width", "mc_se", "flagged"};
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.n), format_number(r.rho), std::string(estimator_name(r.estimator)),
                      std::to_string(r.reps), std::to_string(r.failures), std::to_string(r.covered),
                      format_number(r.coverage), format_number(r.mean_width), format_number(r.mc_se),
                      r.flagged ? "1" : "0"});
  }
  return format_csv(t);
}

std::string CoverageTable::to_text() const {
  std::vector<Index> ns;
  std::vector<double> rhos;
  std::vector<BiasEstimator> ests;
  for (const auto& r : rows) {
    if (std::find(ns.begin(), ns.end(), r.n) == ns.end()) ns.push_back(r.n);
    if (std::find(rhos.begin(), rhos.end(), r.rho) == rhos.end()) rhos.push_back(r.rho);
    if (std::find(ests.begin(), ests.end(), r.estimator) == ests.end()) ests.push_back(r.estimator);
  }
  std::sort(ns.begin(), ns.end());
  std::sort(rhos.rbegin(), rhos.rend());
  std::sort(ests.begin(), ests.end());

  std::ostringstream os;
  os << "Empirical coverage of confidence intervals for E(Y(1))\n\n";
  const int cell = 7;
  os << std::setw(9) << "estimator";
  for (auto e : ests) {
    os << " | " << std::left << std::setw(cell * static_cast<int>(rhos.size())) << estimator_name(e) << std::right;
  }
  os << '\n' << std::setw(9) << "n \\ rho";
  for (std::size_t b = 0; b < ests.size(); ++b) {
    os << " | ";
    for (double r : rhos) os << std::left << std::setw(cell) << format_number(r) << std::right;
  }
  os << '\n';
  for (Index n : ns) {
    os << std::setw(9) << n;
    for (auto e : ests) {
      os << " | ";
      for (double r : rhos) {
        const CoverageRow* row = find(n, r, e);
        std::ostringstream c;
        if (row == nullptr) {
          c << "-";
        } else {
          c << std::fixed << std::setprecision(2) << row->coverage << (row->flagged ? "*" : "");
        }
        os << std::left << std::setw(cell) << c.str() << std::right;
      }
    }
    os << '\n';
  }
  bool any_flag = false;
  for (const auto& r : rows) any_flag = any_flag || r.flagged;
  if (any_flag) os << "\n* at least 2% of replications failed\n";
  return os.str();
}

NuisanceDiagnostic diagnose(const SimDraw& draw, const NuisanceFit& fit) {
  NuisanceDiagnostic d;
  const Index n = draw.m_true.size();
  double sm = 0.0;
  double se = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double dm = fit.m_hat(i) - draw.m_true(i);
    const double de = fit.e_hat(i) - norm_cdf(draw.g_true(i));
    sm += dm * dm;
    se += de * de;
  }
  d.mse_outcome = sm / static_cast<double>(n);
  d.mse_propensity = se / static_cast<double>(n);
  d.scaled_product = std::sqrt(d.mse_outcome * d.mse_propensity * static_cast<double>(n));
  return d;
}

std::vector<NuisanceDiagnostic> nuisance_diagnostics(const SimScenario& scenario, unsigned threads) {
  scenario.validate();
  std::vector<NuisanceDiagnostic> out(static_cast<std::size_t>(scenario.n_reps));
  parallel_for(out.size(), threads, [&](std::size_t rep) {
    const SimDraw draw = generate(scenario, rep);
    std::vector<std::string> names;
    for (const auto& c : draw.data.columns) names.push_back(c.name);
    try {
      const auto x = DesignMatrix::with_intercept(draw.data.covariates, names);
      const auto fit = fit_nuisance(x, draw.data.treatment, draw.data.outcome, Arm::Treated, scenario.nuisance);
      out[rep] = diagnose(draw, fit);
    } catch (const NumericalError&) {
      out[rep].failed = true;
    }
    out[rep].rep = rep;
  });
  return out;
}

}  // namespace sensaipw
