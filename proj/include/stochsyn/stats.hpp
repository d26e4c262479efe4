#pragma once

namespace stochsyn {

/// Standard normal cumulative distribution function.
double normal_cdf(double x);

/// Probability that a standard normal variable lies in [a, b], computed from
/// the tail nearest to the interval so that far-tail cells keep full relative
/// precision.
double normal_interval(double a, double b);

/// Mass not shared by N(0, I) and N(s, I) when |s| = distance, i.e.
/// 1 - 2 * Phi(-distance / 2).
double uncoupled_mass(double distance);

/// Regularized lower incomplete gamma function P(a, x).
double regularized_gamma_p(double a, double x);

double chi2_cdf(double x, double nu);

/// Quantile of the chi-squared distribution with nu degrees of freedom.
/// Throws ArgumentError unless p lies in (0, 1) and nu >= 1.
double chi2_quantile(double p, double nu);

}  // namespace stochsyn
