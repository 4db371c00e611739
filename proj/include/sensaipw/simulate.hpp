#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sensaipw/dataset.hpp"
#include "sensaipw/nuisance.hpp"

namespace sensaipw {

enum class BiasEstimator {
  OracleBias,     // true rho, sigma = 1 and the population mean of lambda(X gamma)
  PlugInBias,     // true rho with the naive sigma estimate
  CorrectedBias,  // true rho with the corrected sigma estimate
};

std::string_view estimator_name(BiasEstimator e);
BiasEstimator parse_estimator(std::string_view name);

/// Selection-model simulation design:
///   X ~ N(0, I_p),  (eta, xi) standard bivariate normal with corr rho,
///   T = 1{X gamma + eta > 0},  Y(1) = 2 + X beta - rho lambda(X gamma) + xi,
/// so that E(Y(1) | X, T=1) = 2 + X beta. The control outcome is an
/// extension used only for ATE checks:
///   Y(0) = intercept0 + X beta0 + rho0 lambda(-X gamma) + xi0,
/// xi0 with corr rho0 to eta, making E(Y(0) | X, T=0) = intercept0 + X beta0.
struct SimScenario {
  Index n = 500;
  Index p = 0;  // 0 means p = n
  double rho = 0.2;
  int n_reps = 500;
  std::uint64_t seed = 1;
  Eigen::VectorXd beta;   // empty: default sparse coefficients
  Eigen::VectorXd gamma;  // empty: default sparse coefficients
  std::vector<BiasEstimator> estimators{BiasEstimator::OracleBias, BiasEstimator::PlugInBias,
                                        BiasEstimator::CorrectedBias};
  double alpha = 0.05;
  NuisanceOptions nuisance;

  std::optional<double> rho0;  // set to generate Y(0)
  double intercept0 = 0.0;
  Eigen::VectorXd beta0;  // empty: zero

  Index dim() const { return p > 0 ? p : n; }
  Eigen::VectorXd beta_vector() const;
  Eigen::VectorXd gamma_vector() const;
  void validate() const;

  /// 0.6 (1, 1/2, 1/3, 1/4, 1/5, 1, 1/2, 1/3, 1/4, 1/5, 0, ...), truncated to p.
  static Eigen::VectorXd default_beta(Index p);
  /// 0.3 (1, 1/2, 1/3, 1/4, 1/5, 1, 1, 1, 1, 1, 0, ...), truncated to p.
  static Eigen::VectorXd default_gamma(Index p);
};

struct SimDraw {
  Dataset data;            // observed Y is Y(1) on treated rows, Y(0) or NaN on controls
  Eigen::VectorXd m_true;  // 2 + X beta
  Eigen::VectorXd g_true;  // X gamma
  Eigen::VectorXd y1;
  Eigen::VectorXd y0;  // NaN unless the scenario defines Y(0)
  Eigen::VectorXd eta;
  Eigen::VectorXd xi;
};

/// Deterministic in (scenario.seed, rep_index); replications use
/// independent streams.
SimDraw generate(const SimScenario& scenario, std::uint64_t rep_index);

/// E(lambda(Z s)) for Z ~ N(0,1) and s = ||gamma||, from a fixed-seed
/// 10^6-draw Monte Carlo. Cached per s.
double oracle_mean_lambda(double gamma_norm);

/// E(Y(1)) = 2 - rho E(lambda(X gamma)).
double true_tau(const SimScenario& scenario);

struct CoverageRow {
  Index n = 0;
  double rho = 0.0;
  BiasEstimator estimator = BiasEstimator::OracleBias;
  int reps = 0;      // replications with a usable interval
  int failures = 0;  // excluded replications
  int covered = 0;
  double coverage = 0.0;
  double mean_width = 0.0;
  double mc_se = 0.0;    // binomial standard error of the coverage
  bool flagged = false;  // failures reach 2% of the requested replications
};

struct CoverageTable {
  std::vector<CoverageRow> rows;

  const CoverageRow* find(Index n, double rho, BiasEstimator e) const;
  void append(const CoverageTable& other);
  std::string to_csv() const;
  /// One line per n, rho descending within each estimator block.
  std::string to_text() const;
};

/// Number of worker threads: SENSAIPW_THREADS if set, else the hardware
/// concurrency.
unsigned default_threads();

/// Coverage of the true E(Y(1)) by each estimator's interval over the
/// scenario's replications. Failing replications are excluded and counted.
CoverageTable run_coverage(const SimScenario& scenario, unsigned threads = 0);

/// Same for several values of rho with common random numbers: replication k
/// uses the same X, eta and T for every rho, and one propensity fit.
CoverageTable run_coverage(const SimScenario& scenario, const std::vector<double>& rhos,
                           unsigned threads = 0);

struct NuisanceDiagnostic {
  std::uint64_t rep = 0;
  double mse_outcome = 0.0;     // E_n[(m_hat - m)^2]
  double mse_propensity = 0.0;  // E_n[(e_hat - e)^2]
  double scaled_product = 0.0;  // sqrt(mse_outcome mse_propensity n)
  bool failed = false;
};

NuisanceDiagnostic diagnose(const SimDraw& draw, const NuisanceFit& fit);

std::vector<NuisanceDiagnostic> nuisance_diagnostics(const SimScenario& scenario, unsigned threads = 0);

/// Runs body(rep) for rep in [0, count) on a pool of threads.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& body);

}  // namespace sensaipw
