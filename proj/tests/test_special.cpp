// Oracles for the scalar special functions: independently coded reference
// implementations (different shift thresholds / series) plus closed-form
// pins, written against the public contracts before checking the library.
#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>

#include "epr/errors.hpp"
#include "epr/special.hpp"

namespace {

// Reference digamma: recurrence up to x >= 20, then the asymptotic expansion
// with three more Bernoulli terms than the implementation uses.
double ref_digamma(double x) {
  double acc = 0.0;
  while (x < 20.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x, inv2 = inv * inv;
  double s = std::log(x) - 0.5 * inv;
  // B_2/2 x^-2, B_4/4 x^-4, ... up to x^-14
  const double c[] = {1.0 / 12, -1.0 / 120, 1.0 / 252, -1.0 / 240, 1.0 / 132, -691.0 / 32760, 1.0 / 12};
  double p = inv2;
  for (double ck : c) {
    s -= ck * p;
    p *= inv2;
  }
  return acc + s;
}

double ref_trigamma(double x) {
  double acc = 0.0;
  while (x < 20.0) {
    acc += 1.0 / (x * x);
    x += 1.0;
  }
  const double inv = 1.0 / x, inv2 = inv * inv;
  double s = inv * (1.0 + 0.5 * inv);
  const double c[] = {1.0 / 6, -1.0 / 30, 1.0 / 42, -1.0 / 30, 5.0 / 66, -691.0 / 2730, 7.0 / 6};
  double p = inv * inv2;
  for (double ck : c) {
    s += ck * p;
    p *= inv2;
  }
  return acc + s;
}

constexpr double kEulerGamma = 0.57721566490153286060651209008240243;

}  // namespace

TEST_CASE("digamma matches closed forms and the reference expansion") {
  CHECK(epr::digamma(1.0) == Catch::Approx(-kEulerGamma).epsilon(1e-14));
  CHECK(epr::digamma(0.5) == Catch::Approx(-kEulerGamma - 2.0 * std::log(2.0)).epsilon(1e-14));
  CHECK(epr::digamma(2.0) == Catch::Approx(1.0 - kEulerGamma).epsilon(1e-14));
  // psi(2) - psi(3) = -1/2
  CHECK(epr::digamma(2.0) - epr::digamma(3.0) == Catch::Approx(-0.5).epsilon(1e-14));

  for (double x : {0.07, 0.31, 0.5, 1.0, 1.7, 2.5, 3.9, 6.0, 8.5, 25.0, 140.0, 3000.0})
    CHECK(epr::digamma(x) == Catch::Approx(ref_digamma(x)).epsilon(1e-12));

  // recurrence psi(x+1) = psi(x) + 1/x
  for (double x : {0.2, 0.9, 1.5, 4.2, 11.0})
    CHECK(epr::digamma(x + 1.0) - epr::digamma(x) == Catch::Approx(1.0 / x).epsilon(1e-12));

  CHECK_THROWS_AS(epr::digamma(0.0), epr::NumericalError);
  CHECK_THROWS_AS(epr::digamma(-1.5), epr::NumericalError);
}

TEST_CASE("trigamma matches closed forms and the reference expansion") {
  const double pi = std::acos(-1.0);
  CHECK(epr::trigamma(1.0) == Catch::Approx(pi * pi / 6.0).epsilon(1e-13));
  CHECK(epr::trigamma(0.5) == Catch::Approx(pi * pi / 2.0).epsilon(1e-13));
  CHECK(epr::trigamma(2.0) == Catch::Approx(pi * pi / 6.0 - 1.0).epsilon(1e-13));

  for (double x : {0.07, 0.31, 0.5, 1.0, 1.7, 2.5, 3.9, 6.0, 8.5, 25.0, 140.0, 3000.0})
    CHECK(epr::trigamma(x) == Catch::Approx(ref_trigamma(x)).epsilon(1e-12));

  for (double x : {0.2, 0.9, 1.5, 4.2, 11.0})
    CHECK(epr::trigamma(x) - epr::trigamma(x + 1.0) == Catch::Approx(1.0 / (x * x)).epsilon(1e-12));

  CHECK_THROWS_AS(epr::trigamma(0.0), epr::NumericalError);
}

TEST_CASE("log1pexp is accurate across all branches") {
  for (double x : {-700.0, -50.0, -37.5, -20.0, -1.0, 0.0, 1.0, 10.0, 17.9, 18.1, 30.0, 33.2, 33.4, 50.0, 700.0}) {
    // reference in long double, naive formula is fine away from overflow
    const long double ref =
        x > 600.0 ? static_cast<long double>(x) : std::log1p(std::exp(static_cast<long double>(x)));
    CHECK(epr::log1pexp(x) == Catch::Approx(static_cast<double>(ref)).epsilon(1e-14).margin(1e-300));
  }
  CHECK(epr::log1pexp(0.0) == Catch::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("logistic and logit are inverse bijections") {
  for (double x : {-30.0, -4.0, -0.3, 0.0, 0.7, 5.0, 25.0})
    CHECK(epr::logit(epr::logistic(x)) == Catch::Approx(x).epsilon(1e-9));
  for (double p : {1e-8, 0.02, 0.5, 0.93, 1.0 - 1e-8})
    CHECK(epr::logistic(epr::logit(p)) == Catch::Approx(p).epsilon(1e-12));
  CHECK(epr::logistic(0.0) == 0.5);
  CHECK_THROWS_AS(epr::logit(0.0), epr::NumericalError);
  CHECK_THROWS_AS(epr::logit(1.0), epr::NumericalError);
}

TEST_CASE("regularized incomplete beta matches closed forms") {
  // I_x(a, 1) = x^a, I_x(1, b) = 1 - (1-x)^b
  for (double x : {0.05, 0.3, 0.62, 0.97}) {
    CHECK(epr::ibeta(2.5, 1.0, x) == Catch::Approx(std::pow(x, 2.5)).epsilon(1e-12));
    CHECK(epr::ibeta(1.0, 3.0, x) == Catch::Approx(1.0 - std::pow(1.0 - x, 3.0)).epsilon(1e-12));
    CHECK(epr::ibeta(1.0, 1.0, x) == Catch::Approx(x).epsilon(1e-13));
  }
  // Beta(2,2): CDF = x^2 (3 - 2x)
  for (double x : {0.1, 0.3, 0.5, 0.8})
    CHECK(epr::ibeta(2.0, 2.0, x) == Catch::Approx(x * x * (3.0 - 2.0 * x)).epsilon(1e-12));
  // symmetry I_x(a,b) = 1 - I_{1-x}(b,a)
  for (double x : {0.12, 0.46, 0.71})
    CHECK(epr::ibeta(3.2, 1.7, x) == Catch::Approx(1.0 - epr::ibeta(1.7, 3.2, 1.0 - x)).epsilon(1e-11));
  CHECK(epr::ibeta(2.0, 3.0, 0.0) == 0.0);
  CHECK(epr::ibeta(2.0, 3.0, 1.0) == 1.0);
  CHECK_THROWS_AS(epr::ibeta(-1.0, 2.0, 0.5), epr::NumericalError);
}

TEST_CASE("F distribution cdf and quantile are consistent") {
  // F(2,2): CDF(x) = x / (1 + x), so quantile(p) = p / (1 - p)
  CHECK(epr::f_cdf(1.0, 2.0, 2.0) == Catch::Approx(0.5).epsilon(1e-10));
  CHECK(epr::f_quantile(0.975, 2.0, 2.0) == Catch::Approx(0.975 / 0.025).epsilon(1e-8));
  // F(1,1) median is exactly 1 by symmetry of X/Y
  CHECK(epr::f_quantile(0.5, 1.0, 1.0) == Catch::Approx(1.0).epsilon(1e-8));
  // round trips
  for (double p : {0.1, 0.5, 0.9, 0.975})
    for (double d1 : {1.0, 3.0, 9.0})
      for (double d2 : {2.0, 7.0, 40.0})
        CHECK(epr::f_cdf(epr::f_quantile(p, d1, d2), d1, d2) == Catch::Approx(p).epsilon(1e-7));
  CHECK_THROWS_AS(epr::f_quantile(1.0, 2.0, 2.0), epr::NumericalError);
}
