#pragma once
// Small special-function kit: digamma/trigamma (logit-Beta moments),
// numerically safe logistic helpers, and the regularized incomplete beta
// function (F quantiles for the Gelman-Rubin upper confidence bound).
// digamma/trigamma use the classical recurrence shift to x >= 6 followed by
// the Bernoulli-number asymptotic series; absolute accuracy ~1e-12, ample for
// moment checks at Monte Carlo resolution.

#include <cmath>
#include <limits>

#include "epr/errors.hpp"

namespace epr {

inline double digamma(double x) {
  if (!(x > 0.0)) throw NumericalError("digamma: requires x > 0");
  double acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // psi(x) ~ ln x - 1/(2x) - sum B_{2n}/(2n x^{2n})
  double s = std::log(x) - 0.5 * inv;
  s -= inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
  return acc + s;
}

inline double trigamma(double x) {
  if (!(x > 0.0)) throw NumericalError("trigamma: requires x > 0");
  double acc = 0.0;
  while (x < 6.0) {
    acc += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // psi'(x) ~ 1/x + 1/(2x^2) + sum B_{2n}/x^{2n+1}
  double s = inv + 0.5 * inv2;
  s += inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0 - inv2 * (691.0 / 2730.0))))));
  return acc + s;
}

// log(1 + e^x) without overflow/underflow over the whole real line.
inline double log1pexp(double x) {
  if (x <= -37.0) return std::exp(x);
  if (x <= 18.0) return std::log1p(std::exp(x));
  if (x <= 33.3) return x + std::exp(-x);
  return x;
}

inline double logistic(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw NumericalError("logit: requires p in (0,1)");
  return std::log(p) - std::log1p(-p);
}

namespace detail {
// Continued fraction for the incomplete beta (modified Lentz).
inline double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw NumericalError("incomplete beta: continued fraction did not converge");
}
}  // namespace detail

// Regularized incomplete beta I_x(a,b) = P(Beta(a,b) <= x).
inline double ibeta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw NumericalError("ibeta: requires a,b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double lbt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double bt = std::exp(lbt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * detail::betacf(a, b, x) / a;
  return 1.0 - bt * detail::betacf(b, a, 1.0 - x) / b;
}

inline double beta_cdf(double x, double a, double b) { return ibeta(a, b, x); }

inline double f_cdf(double x, double d1, double d2) {
  if (x <= 0.0) return 0.0;
  return ibeta(0.5 * d1, 0.5 * d2, d1 * x / (d1 * x + d2));
}

// Quantile of the F(d1, d2) distribution by bisection on the CDF.
inline double f_quantile(double p, double d1, double d2) {
  if (!(p > 0.0 && p < 1.0)) throw NumericalError("f_quantile: requires p in (0,1)");
  double lo = 0.0, hi = 1.0;
  while (f_cdf(hi, d1, d2) < p) {
    hi *= 2.0;
    if (hi > 1e300) throw NumericalError("f_quantile: bracket expansion failed");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (f_cdf(mid, d1, d2) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace epr
