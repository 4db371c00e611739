#pragma once

// Scalar normal-distribution helpers. All functions are pure and reject
// non-finite arguments with std::domain_error.

namespace sensaipw {

/// Standard normal density.
double norm_pdf(double x);

/// Standard normal distribution function, computed as erfc(-x/sqrt 2)/2 so
/// the lower tail keeps full relative precision until it underflows
/// (x < -38.4).
double norm_cdf(double x);

/// Inverse of norm_cdf on (0, 1). Acklam's rational approximation followed by
/// one Halley step against norm_cdf.
double norm_quantile(double p);

/// Inverse Mills ratio phi(x)/Phi(x).
///
/// For x >= -5 the direct ratio is used. Below that the ratio is evaluated as
/// the reciprocal of the Mills ratio of -x via its Laplace continued fraction,
/// which stays finite and accurate for arbitrarily negative x (where both
/// phi and Phi underflow).
double inv_mills(double x);

}  // namespace sensaipw
