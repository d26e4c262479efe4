#include "stochsyn/stats.hpp"

#include "stochsyn/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace stochsyn {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kEps = 1e-16;
constexpr int kMaxTerms = 10000;

// Series expansion, converges quickly for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int k = 1; k < kMaxTerms; ++k) {
    term *= x / (a + k);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a, x) (modified Lentz), valid for x >= a + 1.
double gamma_q_continued_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxTerms; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double normal_interval(double a, double b) {
  if (!(a < b)) return 0.0;
  if (a >= 0.0) return 0.5 * (std::erfc(a * kInvSqrt2) - std::erfc(b * kInvSqrt2));
  if (b <= 0.0) return 0.5 * (std::erfc(-b * kInvSqrt2) - std::erfc(-a * kInvSqrt2));
  return 1.0 - 0.5 * std::erfc(-a * kInvSqrt2) - 0.5 * std::erfc(b * kInvSqrt2);
}

double uncoupled_mass(double distance) {
  // 1 - 2 Phi(-t) == erf(t / sqrt 2) with t = distance / 2.
  const double v = std::erf(0.5 * distance * kInvSqrt2);
  return std::clamp(v, 0.0, 1.0);
}

double regularized_gamma_p(double a, double x) {
  if (!(a > 0.0)) throw ArgumentError("regularized_gamma_p: a must be positive");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return std::min(1.0, gamma_p_series(a, x));
  return std::max(0.0, 1.0 - gamma_q_continued_fraction(a, x));
}

double chi2_cdf(double x, double nu) { return regularized_gamma_p(0.5 * nu, 0.5 * x); }

double chi2_quantile(double p, double nu) {
  if (!(p > 0.0 && p < 1.0)) throw ArgumentError("chi2_quantile: p must lie in (0, 1)");
  if (!(nu >= 1.0)) throw ArgumentError("chi2_quantile: degrees of freedom must be >= 1");

  double lo = 0.0;
  double hi = nu + 40.0 * std::sqrt(nu);
  while (chi2_cdf(hi, nu) < p) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) throw ArgumentError("chi2_quantile: p too close to 1");
  }
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (chi2_cdf(mid, nu) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 1e-15 * hi) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace stochsyn
