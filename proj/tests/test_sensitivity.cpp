#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "sensaipw/errors.hpp"
#include "sensaipw/mathfn.hpp"
#include "sensaipw/sensitivity.hpp"
#include "sensaipw/simulate.hpp"

using namespace sensaipw;

namespace {

constexpr double kLambda0 = 0.79788456080286535588;       // sqrt(2/pi)
constexpr double kDenomHalf = 0.840845056908105;          // 1 - 0.25 * 2/pi
constexpr double kCriticalRatio = 0.507385794358422;      // q(0.84) / q(0.975)

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

struct Sample {
  Eigen::VectorXd t, y, m, g;
};

// Probit selection with unit-variance outcome noise; oracle nuisances.
Sample sample(Index n, double rho, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Sample s{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Index i = 0; i < n; ++i) {
    const double x = z(rng);
    s.g(i) = 0.2 + 0.7 * x;
    s.m(i) = 1.0 + x;
    const double eta = z(rng);
    const double xi = rho * eta + std::sqrt(1 - rho * rho) * z(rng);
    s.t(i) = s.g(i) + eta > 0 ? 1.0 : 0.0;
    s.y(i) = s.m(i) + xi;
  }
  return s;
}

AipwResult unit_result(double estimate, double v_hat, Index n) {
  AipwResult a;
  a.estimate = estimate;
  a.v_hat = v_hat;
  a.n = n;
  return a;
}

}  // namespace

TEST_CASE("naive sigma") {
  const Eigen::VectorXd t = vec({1, 1, 0, 0});
  const auto fit = NuisanceFit::from_values(Arm::Treated, vec({1, 2, 0, 0}), vec({0.5, 0.5, 0.5, 0.5}));
  CHECK(sigma_naive(t, vec({1, 2, 9, 9}), fit) == 0.0);
  CHECK(sigma_naive(t, vec({2, 1, 9, 9}), fit) == 1.0);
}

TEST_CASE("corrected sigma") {
  const Eigen::VectorXd t = vec({1, 1, 0, 0});
  const Eigen::VectorXd y = vec({2, 1, 9, 9});
  const auto fit = NuisanceFit::from_index(Arm::Treated, vec({1, 2, 0, 0}), Eigen::VectorXd::Zero(4));
  CHECK(sigma_corrected(t, y, fit, 0.0) == sigma_naive(t, y, fit));
  const double sc = sigma_corrected(t, y, fit, 0.5);
  CHECK(sc * sc == doctest::Approx(1.0 / kDenomHalf).epsilon(1e-14));

  // h lambda(h) + lambda(h)^2 < 1 for every finite h, so the denominator
  // reaches zero only through a treated row with an infinite index.
  const double inf = std::numeric_limits<double>::infinity();
  const auto extreme = NuisanceFit::from_index(Arm::Treated, vec({1, 2, 0, 0}), vec({-inf, 0, 0, 0}));
  CHECK_THROWS_AS(sigma_corrected(t, y, extreme, 0.1), InvalidRho);
  CHECK(sigma_corrected(t, y, extreme, 0.0) == sigma_naive(t, y, extreme));
}

TEST_CASE("corrected sigma is defined for every rho below one in magnitude") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 200; ++rep) {
    Eigen::VectorXd g(20);
    for (Index i = 0; i < 20; ++i) g(i) = 4.0 * z(rng);
    const auto fit = NuisanceFit::from_index(Arm::Treated, Eigen::VectorXd::Zero(20), g);
    Eigen::VectorXd t = Eigen::VectorXd::Ones(20);
    const double rho = std::tanh(z(rng));
    CHECK(sigma_corrected(t, Eigen::VectorXd::Ones(20), fit, rho) >= 1.0);
  }
}

TEST_CASE("bias estimates") {
  const Eigen::VectorXd t = vec({1, 0, 1, 0, 0});
  const auto fit1 = NuisanceFit::from_index(Arm::Treated, Eigen::VectorXd::Zero(5), Eigen::VectorXd::Zero(5));
  const auto fit0 = NuisanceFit::from_index(Arm::Control, Eigen::VectorXd::Zero(5), Eigen::VectorXd::Zero(5));
  CHECK(bias_hat(t, fit1, 0.0, 1.0, TargetParameter::MeanY1).b_hat == 0.0);
  CHECK(bias_hat(t, fit1, 0.0, 1.0, TargetParameter::MeanY1GivenT0).b_hat == 0.0);
  CHECK(bias_hat(t, fit0, 0.0, 1.0, TargetParameter::MeanY0).b_hat == 0.0);
  CHECK(bias_hat(t, fit0, 0.0, 1.0, TargetParameter::MeanY0GivenT1).b_hat == 0.0);

  const double b = bias_hat(t, fit1, 0.5, 1.0, TargetParameter::MeanY1).b_hat;
  CHECK(b == doctest::Approx(0.5 * kLambda0).epsilon(1e-15));
  CHECK(b == doctest::Approx(0.39894).epsilon(1e-5));
  CHECK(bias_hat(t, fit1, 0.5, 1.0, TargetParameter::MeanY1GivenT0).b_hat ==
        doctest::Approx(b / 0.6).epsilon(1e-14));
  CHECK(bias_hat(t, fit0, 0.5, 1.0, TargetParameter::MeanY0GivenT1).b_hat ==
        doctest::Approx(-b / 0.4).epsilon(1e-14));
  CHECK_THROWS_AS(bias_hat(t, fit0, 0.5, 1.0, TargetParameter::MeanY1), std::invalid_argument);
}

TEST_CASE("control bias is the treated bias on relabeled data, negated") {
  const Sample s = sample(400, 0.3, 5);
  const Eigen::VectorXd flipped = 1.0 - s.t.array();
  const Eigen::VectorXd neg_g = -s.g;
  const auto fit0 = NuisanceFit::from_index(Arm::Control, s.m, s.g);
  const auto fit1 = NuisanceFit::from_index(Arm::Treated, s.m, neg_g);
  for (double rho : {-0.4, 0.1, 0.6}) {
    for (auto mode : {SigmaMode::Naive, SigmaMode::Corrected}) {
      const double b0 = bias_at(s.t, s.y, fit0, rho, mode, TargetParameter::MeanY0).b_hat;
      const double b1 = bias_at(flipped, s.y, fit1, rho, mode, TargetParameter::MeanY1).b_hat;
      CHECK(b0 == doctest::Approx(-b1).epsilon(1e-13));
    }
  }
}

TEST_CASE("confidence intervals") {
  const AipwResult a = unit_result(0.0, 1.0, 100);
  const Interval ci = confidence_interval(a, BiasEstimate{}, 0.05);
  CHECK(ci.lower == doctest::Approx(-0.196).epsilon(1e-4));
  CHECK(ci.upper == doctest::Approx(0.196).epsilon(1e-4));
  CHECK(ci.point == 0.0);

  BiasEstimate shift;
  shift.b_hat = 0.5;
  const Interval moved = confidence_interval(a, shift, 0.05);
  CHECK(moved.lower == doctest::Approx(ci.lower - 0.5).epsilon(1e-15));
  CHECK(moved.upper - moved.lower == doctest::Approx(ci.upper - ci.lower).epsilon(1e-15));

  const Interval narrow = confidence_interval(a, BiasEstimate{}, 0.32);
  CHECK((narrow.upper - narrow.lower) / (ci.upper - ci.lower) == doctest::Approx(kCriticalRatio).epsilon(1e-12));
  CHECK_THROWS_AS(confidence_interval(a, shift, 1.5), ConfigError);
}

TEST_CASE("uncertainty intervals") {
  const Sample s = sample(2000, 0.0, 7);
  const auto fit = NuisanceFit::from_index(Arm::Treated, s.m, s.g);
  const AipwResult a = aipw_mean_y1(s.t, s.y, fit);

  SUBCASE("degenerate range gives the single interval") {
    const auto r = uncertainty_interval(s.t, s.y, fit, a, {RhoRange::point(0.3), SigmaMode::Corrected, 0.05});
    REQUIRE(r.per_rho.size() == 1);
    CHECK(r.ui_lower == r.per_rho[0].lower);
    CHECK(r.ui_upper == r.per_rho[0].upper);
    const auto zero = uncertainty_interval(s.t, s.y, fit, a, {RhoRange::point(0.0), SigmaMode::Naive, 0.05});
    CHECK(zero.ui_lower == zero.unconfounded.lower);
    CHECK(zero.ui_upper == zero.unconfounded.upper);
  }

  SUBCASE("naive sigma: endpoints at the range ends, linear bias, constant width") {
    const RhoRange range{-0.4, 0.4, 41};
    const auto r = uncertainty_interval(s.t, s.y, fit, a, {range, SigmaMode::Naive, 0.05});
    CHECK(r.ui_lower == r.per_rho.back().lower);
    CHECK(r.ui_upper == r.per_rho.front().upper);
    const double width = r.per_rho.front().upper - r.per_rho.front().lower;
    for (const auto& row : r.per_rho) CHECK(std::fabs(row.upper - row.lower - width) < 1e-12);

    const double unit = bias_at(s.t, s.y, fit, 1.0, SigmaMode::Naive, TargetParameter::MeanY1).b_hat;
    for (double rho : {-0.4, -0.1, 0.05, 0.2, 0.4}) {
      const double b = bias_at(s.t, s.y, fit, rho, SigmaMode::Naive, TargetParameter::MeanY1).b_hat;
      CHECK(b == doctest::Approx(rho * unit).epsilon(1e-14));
    }
  }

  SUBCASE("widening the range never shrinks the interval") {
    for (auto mode : {SigmaMode::Naive, SigmaMode::Corrected}) {
      double lo = 1e300;
      double hi = -1e300;
      for (double w : {0.0, 0.05, 0.1, 0.2, 0.4, 0.8}) {
        const auto r = uncertainty_interval(s.t, s.y, fit, a, {{-w / 2, w, 31}, mode, 0.05});
        CHECK(r.ui_lower <= lo);
        CHECK(r.ui_upper >= hi);
        lo = r.ui_lower;
        hi = r.ui_upper;
      }
    }
  }

  SUBCASE("corrected sigma keeps the width fixed too") {
    const auto r = uncertainty_interval(s.t, s.y, fit, a, {{-0.9, 0.9, 19}, SigmaMode::Corrected, 0.05});
    const double width = r.per_rho.front().upper - r.per_rho.front().lower;
    for (const auto& row : r.per_rho) CHECK(std::fabs(row.upper - row.lower - width) < 1e-12);
  }
}

TEST_CASE("uncertainty interval on a simulated replication contains the truth") {
  // Seed 1, replication 3, n = p = 500, rho = 0.2; range (0, 0.4).
  SimScenario sc;
  sc.n = 500;
  sc.rho = 0.2;
  const SimDraw d = generate(sc, 3);
  std::vector<std::string> names;
  const DesignMatrix x = DesignMatrix::with_intercept(d.data.covariates, names);
  const NuisanceFit fit = fit_nuisance(x, d.data.treatment, d.data.outcome, Arm::Treated);
  const AipwResult a = aipw_mean_y1(d.data.treatment, d.data.outcome, fit);
  const auto r = uncertainty_interval(d.data.treatment, d.data.outcome, fit, a,
                                      {{0.0, 0.4, 41}, SigmaMode::Naive, 0.05});
  const double tau = true_tau(sc);
  CHECK(r.ui_lower < tau);
  CHECK(tau < r.ui_upper);
}

TEST_CASE("feasible rho interval") {
  std::vector<double> grid;
  for (int k = -99; k <= 99; ++k) grid.push_back(k / 100.0);

  SUBCASE("constant middle inside the bounds") {
    const std::vector<double> middle(grid.size(), 0.5);
    const auto f = feasible_rho_interval(grid, middle, 0.0, 1.0);
    REQUIRE(f.range);
    CHECK(f.range->first == -0.99);
    CHECK(f.range->second == 0.99);
  }
  SUBCASE("linear crossing") {
    const auto f = feasible_rho_interval(grid, grid, -0.3, 0.1);
    REQUIRE(f.range);
    CHECK(f.range->first == doctest::Approx(-0.3).epsilon(1e-12));
    CHECK(f.range->second == doctest::Approx(0.1).epsilon(1e-12));
  }
  SUBCASE("empty set") {
    const std::vector<double> middle(grid.size(), 2.0);
    const auto f = feasible_rho_interval(grid, middle, 0.0, 1.0);
    CHECK_FALSE(f.range);
    CHECK_FALSE(f.warnings.empty());
  }
  SUBCASE("split set prefers the piece containing zero") {
    std::vector<double> middle;
    for (double r : grid) middle.push_back(std::fabs(std::fabs(r) - 0.5) < 0.1 ? 5.0 : 0.0);
    const auto f = feasible_rho_interval(grid, middle, -1.0, 1.0);
    REQUIRE(f.range);
    CHECK(f.range->first < 0.0);
    CHECK(f.range->second > 0.0);
    CHECK(f.range->second < 0.5);
    CHECK_FALSE(f.warnings.empty());
  }
  SUBCASE("NaN points are violations") {
    std::vector<double> middle(grid.size(), 0.5);
    for (std::size_t k = 150; k < grid.size(); ++k) middle[k] = std::nan("");
    const auto f = feasible_rho_interval(grid, middle, 0.0, 1.0);
    REQUIRE(f.range);
    CHECK(f.range->second == grid[149]);
  }
}

TEST_CASE("rho bounds from data") {
  // Treated outcomes below control outcomes, as in the birth-weight setting.
  const Sample s = sample(3000, 0.0, 11);
  Eigen::VectorXd y = s.y;
  for (Index i = 0; i < y.size(); ++i) y(i) -= s.t(i) == 1.0 ? 1.0 : 0.0;
  const auto fit1 = NuisanceFit::from_index(Arm::Treated, s.m.array() - 1.0, s.g);
  const auto fit0 = NuisanceFit::from_index(Arm::Control, s.m, s.g);
  const RhoBounds b = derive_rho_bounds(s.t, y, fit1, fit0);
  CHECK(b.grid.size() == 199);
  CHECK(b.grid[99] == 0.0);
  CHECK(b.mean_y_treated < b.mean_y_control);
  CHECK(b.middle1[99] == doctest::Approx(aipw_tau10(s.t, y, fit1).estimate).epsilon(1e-14));
  CHECK(b.middle0[99] == doctest::Approx(aipw_tau01(s.t, y, fit0).estimate).epsilon(1e-14));
  REQUIRE(b.rho1.range);
  REQUIRE(b.rho0.range);
  CHECK(b.rho1.range->first < b.rho1.range->second);
}

TEST_CASE("ATE intervals") {
  const Index n = 20000;
  std::mt19937_64 rng(13);
  std::normal_distribution<double> z;
  Eigen::VectorXd t(n), y(n), m(n), g(n);
  for (Index i = 0; i < n; ++i) {
    const double x = z(rng);
    g(i) = 0.5 * x;
    m(i) = 3.0 + x;
    t(i) = g(i) + z(rng) > 0 ? 1.0 : 0.0;
    y(i) = m(i) + z(rng);
  }
  const auto fit1 = NuisanceFit::from_index(Arm::Treated, m, g);
  const auto fit0 = NuisanceFit::from_index(Arm::Control, m, g);
  const SensitivitySpec zero{RhoRange::point(0.0), SigmaMode::Naive, 0.05};
  const auto plain = estimate_ate(t, y, fit1, fit0, zero, zero, 0.05);
  REQUIRE(plain.per_rho.size() == 1);
  const double direct = aipw_mean_y1(t, y, fit1).estimate - aipw_mean_y0(t, y, fit0).estimate;
  CHECK(plain.per_rho[0].point == doctest::Approx(direct).epsilon(1e-14));
  CHECK(plain.ui_lower == plain.unconfounded.lower);
  CHECK(std::fabs(plain.estimate) < 3.0 * std::sqrt(plain.v_hat / n));

  const SensitivitySpec s1{{-0.2, 0.06, 14}, SigmaMode::Naive, 0.05};
  const SensitivitySpec s0{{-0.25, 0.05, 7}, SigmaMode::Corrected, 0.05};
  const auto r = estimate_ate(t, y, fit1, fit0, s1, s0, 0.05);
  CHECK(r.per_rho.size() == 14 * 7);
  CHECK(r.ui_lower <= plain.ui_lower);
  CHECK(r.ui_upper >= plain.ui_upper);
  for (const auto& row : r.per_rho) {
    const double b1 = bias_at(t, y, fit1, row.rho, SigmaMode::Naive, TargetParameter::MeanY1).b_hat;
    const double b0 = bias_at(t, y, fit0, *row.rho0, SigmaMode::Corrected, TargetParameter::MeanY0).b_hat;
    CHECK(row.point == doctest::Approx(direct - b1 + b0).epsilon(1e-12));
  }
}

TEST_CASE("rho range validation") {
  CHECK_THROWS_AS((RhoRange{-1.0, 0.5, 11}).validate(), ConfigError);
  CHECK_THROWS_AS((RhoRange{0.5, 0.1, 11}).validate(), ConfigError);
  CHECK_THROWS_AS((RhoRange{0.1, 0.5, 1}).validate(), ConfigError);
  const auto grid = RhoRange{-0.2, 0.06, 27}.grid();
  CHECK(grid.front() == -0.2);
  CHECK(grid.back() == 0.06);
  CHECK(grid.size() == 27);
}
