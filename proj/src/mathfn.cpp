#include "sensaipw/mathfn.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sensaipw {
namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779;  // 1/sqrt(2 pi)
constexpr double kMillsSwitch = -5.0;

void require_finite(double x, const char* fn) {
  if (!std::isfinite(x)) {
    throw std::domain_error(std::string(fn) + ": non-finite argument");
  }
}

// Modified Lentz evaluation of
//   t + 1/(t + 2/(t + 3/(t + ...)))
// which equals 1/R(t), R the Mills ratio (1 - Phi(t))/phi(t), for t > 0.
double reciprocal_mills_ratio(double t) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  double f = t;
  double c = f;
  double d = 0.0;
  for (int k = 1; k < 5000; ++k) {
    const double a = static_cast<double>(k);
    d = t + a * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = t + a / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = c * d;
    f *= delta;
    if (std::fabs(delta - 1.0) < eps) break;
  }
  return f;
}

// Acklam (2003) rational approximation, relative error below 1.15e-9.
double acklam_quantile(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  constexpr double p_high = 1.0 - p_low;

  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > p_high) {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double norm_pdf(double x) {
  require_finite(x, "norm_pdf");
  return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

double norm_cdf(double x) {
  require_finite(x, "norm_cdf");
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("norm_quantile: probability must lie in (0, 1)");
  }
  double x = acklam_quantile(p);
  // Halley step. Work on the smaller tail so the residual keeps its digits.
  double e;
  if (x <= 0.0) {
    e = norm_cdf(x) - p;
  } else {
    e = (1.0 - p) - norm_cdf(-x);
  }
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

double inv_mills(double x) {
  require_finite(x, "inv_mills");
  if (x < kMillsSwitch) return reciprocal_mills_ratio(-x);
  return norm_pdf(x) / norm_cdf(x);
}

}  // namespace sensaipw
