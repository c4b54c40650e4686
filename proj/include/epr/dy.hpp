#pragma once
// Conjugate-multiscale building block: the two-parameter exponential family
// with density proportional to exp(alpha*w - kappa*psi(w)), in its two
// partition families.
//
//   Gaussian partition   psi(w) = w^2            ->  N(alpha/(2 kappa), 1/(2 kappa))
//   Bernoulli partition  psi(w) = log(1 + e^w)   ->  w = logit(p), p ~ Beta(alpha, kappa - alpha)
//
// Both samplers are exact.  The Bernoulli-partition draw is composed from two
// gamma variates on the log scale, logit(p) = log G1 - log G2 with
// G1 ~ Gamma(alpha), G2 ~ Gamma(kappa - alpha), which stays finite in double
// precision even when either shape is far below 1 (where p itself would round
// to 0 or 1).

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "epr/errors.hpp"
#include "epr/rng.hpp"
#include "epr/special.hpp"

namespace epr {

enum class PartitionTag { gaussian, bernoulli };

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

struct DYSpec {
  double alpha = 0.0;
  double kappa = 1.0;
  PartitionTag tag = PartitionTag::gaussian;

  void validate() const {
    if (!std::isfinite(alpha) || !std::isfinite(kappa))
      throw ConfigError("DYSpec: alpha and kappa must be finite");
    if (tag == PartitionTag::gaussian) {
      if (!(kappa > 0.0)) throw ConfigError("DYSpec[gaussian]: kappa must be > 0");
    } else {
      if (!(alpha > 0.0)) throw ConfigError("DYSpec[bernoulli]: alpha must be > 0");
      if (!(kappa > alpha)) throw ConfigError("DYSpec[bernoulli]: kappa must be > alpha");
    }
  }
};

inline double psi_value(PartitionTag tag, double w) {
  return tag == PartitionTag::gaussian ? w * w : log1pexp(w);
}

// log of the unnormalized density alpha*w - kappa*psi(w).
inline double dy_log_kernel(const DYSpec& s, double w) {
  return s.alpha * w - s.kappa * psi_value(s.tag, w);
}

inline double sample_dy(const DYSpec& s, RandomStream& rng) {
  s.validate();
  if (s.tag == PartitionTag::gaussian) {
    const double sd = std::sqrt(0.5 / s.kappa);
    return 0.5 * s.alpha / s.kappa + sd * rng.normal();
  }
  const double lg1 = rng.log_gamma(s.alpha);
  const double lg2 = rng.log_gamma(s.kappa - s.alpha);
  return lg1 - lg2;
}

inline Moments dy_moments(const DYSpec& s) {
  s.validate();
  if (s.tag == PartitionTag::gaussian)
    return {0.5 * s.alpha / s.kappa, 0.5 / s.kappa};
  // logit of Beta(a, b): mean psi0(a) - psi0(b), variance psi1(a) + psi1(b)
  const double a = s.alpha, b = s.kappa - s.alpha;
  return {digamma(a) - digamma(b), trigamma(a) + trigamma(b)};
}

// Ordered vector of independent component specs; ordering matches the rows of
// the assembled data-augmentation system (data rows first, then the
// fixed/random/fine-scale prior rows).
struct DYVectorSpec {
  std::vector<DYSpec> specs;

  int size() const { return static_cast<int>(specs.size()); }

  void validate() const {
    for (std::size_t i = 0; i < specs.size(); ++i) {
      try {
        specs[i].validate();
      } catch (const Error& e) {
        throw ConfigError("component " + std::to_string(i) + ": " + e.what());
      }
    }
  }

  Eigen::VectorXd means() const {
    Eigen::VectorXd m(size());
    for (int i = 0; i < size(); ++i) m[i] = dy_moments(specs[i]).mean;
    return m;
  }

  Eigen::VectorXd variances() const {
    Eigen::VectorXd v(size());
    for (int i = 0; i < size(); ++i) v[i] = dy_moments(specs[i]).variance;
    return v;
  }
};

inline Eigen::VectorXd sample_w(const DYVectorSpec& vs, RandomStream& rng) {
  vs.validate();
  Eigen::VectorXd w(vs.size());
  for (int i = 0; i < vs.size(); ++i) w[i] = sample_dy(vs.specs[i], rng);
  return w;
}

}  // namespace epr
