#pragma once
// Observed-data container for the three-response multiscale model and the
// hyperparameter state (scale priors + the Bernoulli fine-scale concentration
// alpha_xi).
//
// Supports: n1 point locations carrying the binary response z3 (and its
// covariates x3, plus the point-Gaussian covariates x1 observed everywhere);
// the point-Gaussian response z1 exists only where z3 = 1 (zero-inflation),
// listed through `fire_index`; n2 areal regions carry the areal-Gaussian
// response z2.  Either Gaussian support may be empty, so Gaussian-only or
// Bernoulli-only sub-models assemble cleanly.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "epr/basis.hpp"
#include "epr/errors.hpp"
#include "epr/rng.hpp"

namespace epr {

struct MultiTypeDataset {
  // point support (n1 rows)
  PointMat points;             // n1 x 2
  Eigen::VectorXd z3;          // n1, each 0 or 1
  Mat x1;                      // n1 x p1, point-Gaussian covariates at every point
  Mat x3;                      // n1 x p3
  std::vector<int> fire_index; // points with z3 == 1, ascending; rows of z1
  Eigen::VectorXd z1;          // n1* observed magnitudes, aligned with fire_index
  Eigen::VectorXd sigma2_1;    // n1* known observation variances

  // areal support (n2 rows)
  std::vector<ArealRegion> regions;
  Eigen::VectorXd z2;          // n2
  Eigen::VectorXd sigma2_2;    // n2
  Mat x2;                      // n2 x p2

  // fine grid underpinning the areal change of support
  CellGrid grid;

  int n1() const { return static_cast<int>(points.rows()); }
  int n1s() const { return static_cast<int>(fire_index.size()); }
  int n2() const { return static_cast<int>(regions.size()); }
  int p1() const { return static_cast<int>(x1.cols()); }
  int p2() const { return static_cast<int>(x2.cols()); }
  int p3() const { return static_cast<int>(x3.cols()); }

  PointMat fire_points() const {
    PointMat fp(n1s(), 2);
    for (int i = 0; i < n1s(); ++i) fp.row(i) = points.row(fire_index[i]);
    return fp;
  }

  Mat x1_fire() const {
    Mat xf(n1s(), p1());
    for (int i = 0; i < n1s(); ++i) xf.row(i) = x1.row(fire_index[i]);
    return xf;
  }

  void validate() const {
    const int n = n1();
    if (z3.size() != n) throw DataError("dataset: z3 length " + std::to_string(z3.size()) + " != point count " + std::to_string(n));
    if (x1.rows() != n || x3.rows() != n) throw DataError("dataset: point covariate row count mismatch");
    std::vector<int> expect;
    for (int i = 0; i < n; ++i) {
      if (z3[i] != 0.0 && z3[i] != 1.0)
        throw DataError("dataset: z3[" + std::to_string(i) + "] = " + std::to_string(z3[i]) + " not in {0,1}");
      if (z3[i] == 1.0) expect.push_back(i);
    }
    if (expect != fire_index)
      throw DataError("dataset: fire_index must list exactly the points with z3 = 1, in order");
    const int m = n1s();
    if (z1.size() != m || sigma2_1.size() != m)
      throw DataError("dataset: z1/sigma2_1 must have one row per z3 = 1 point (zero-inflation)");
    for (int i = 0; i < m; ++i) {
      if (!std::isfinite(z1[i])) throw DataError("dataset: z1[" + std::to_string(i) + "] not finite");
      if (!(sigma2_1[i] > 0.0)) throw DataError("dataset: sigma2_1[" + std::to_string(i) + "] must be > 0");
    }
    const int k = n2();
    if (z2.size() != k || sigma2_2.size() != k || x2.rows() != k)
      throw DataError("dataset: areal table shape mismatch");
    for (int j = 0; j < k; ++j) {
      if (!std::isfinite(z2[j])) throw DataError("dataset: z2[" + std::to_string(j) + "] not finite");
      if (!(sigma2_2[j] > 0.0)) throw DataError("dataset: sigma2_2[" + std::to_string(j) + "] must be > 0");
      if (regions[j].cells.empty()) throw DataError("dataset: region '" + regions[j].id + "' has no cells");
      for (int c : regions[j].cells)
        if (c < 0 || c >= grid.size())
          throw DataError("dataset: region '" + regions[j].id + "' references a cell outside the grid");
    }
    if (k > 0 && !(grid.cell_area > 0.0)) throw DataError("dataset: grid cell_area must be > 0");
  }
};

// Prior on one scale parameter (sigma_beta / sigma_eta / sigma_xi).  The
// point-mass family makes theta deterministic, which is what the exactness
// oracles condition on; inv-gamma is parameterized on the variance sigma^2.
struct PriorSpec {
  enum class Family { point_mass, log_uniform, inv_gamma_variance };

  Family family = Family::point_mass;
  double a = 1.0;  // point mass: the value; log-uniform: lower; inv-gamma: shape
  double b = 1.0;  // log-uniform: upper; inv-gamma: rate

  void validate(const std::string& name) const {
    switch (family) {
      case Family::point_mass:
        if (!(a > 0.0)) throw ConfigError(name + ": point mass must be positive");
        break;
      case Family::log_uniform:
        if (!(a > 0.0 && b > a)) throw ConfigError(name + ": log-uniform needs 0 < lower < upper");
        break;
      case Family::inv_gamma_variance:
        if (!(a > 0.0 && b > 0.0)) throw ConfigError(name + ": inv-gamma needs positive shape and rate");
        break;
    }
  }

  // One draw of the *scale* sigma (not the variance).
  double sample(RandomStream& rng) const {
    switch (family) {
      case Family::point_mass:
        return a;
      case Family::log_uniform:
        return std::exp(rng.uniform(std::log(a), std::log(b)));
      case Family::inv_gamma_variance: {
        // sigma^2 ~ IG(a, b)  <=>  1/sigma^2 ~ Gamma(a, 1/b)
        const double precision = rng.gamma(a) / b;
        return 1.0 / std::sqrt(precision);
      }
    }
    throw ConfigError("PriorSpec: unknown family");
  }
};

struct ThetaDraw {
  double sigma_beta = 1.0;
  double sigma_eta = 1.0;
  double sigma_xi = 1.0;
};

struct HyperState {
  double alpha_xi = 1.0;  // Bernoulli fine-scale concentration, must be > 0
  PriorSpec prior_sigma_beta{PriorSpec::Family::log_uniform, 0.01, 100.0};
  PriorSpec prior_sigma_eta{PriorSpec::Family::log_uniform, 0.01, 100.0};
  PriorSpec prior_sigma_xi{PriorSpec::Family::log_uniform, 0.01, 100.0};

  void validate() const {
    if (!(alpha_xi > 0.0)) throw ConfigError("hyper: alpha_xi must be > 0");
    prior_sigma_beta.validate("prior_sigma_beta");
    prior_sigma_eta.validate("prior_sigma_eta");
    prior_sigma_xi.validate("prior_sigma_xi");
  }

  static HyperState point_mass(double sb, double se, double sx, double axi = 1.0) {
    HyperState h;
    h.alpha_xi = axi;
    h.prior_sigma_beta = {PriorSpec::Family::point_mass, sb, 0.0};
    h.prior_sigma_eta = {PriorSpec::Family::point_mass, se, 0.0};
    h.prior_sigma_xi = {PriorSpec::Family::point_mass, sx, 0.0};
    return h;
  }
};

inline ThetaDraw draw_theta(const HyperState& hyper, RandomStream& rng) {
  hyper.validate();
  ThetaDraw t;
  t.sigma_beta = hyper.prior_sigma_beta.sample(rng);
  t.sigma_eta = hyper.prior_sigma_eta.sample(rng);
  t.sigma_xi = hyper.prior_sigma_xi.sample(rng);
  return t;
}

}  // namespace epr
