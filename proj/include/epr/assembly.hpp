#pragma once
// Deterministic model objects for the conjugate multiscale posterior.
//
// Parameter vector zeta = (xi, beta, eta), sizes (n, p, 3r).  The augmented
// design stacks data rows over prior rows:
//
//        [ I_n  X  G ]   n     data rows (point-G, areal-G, Bernoulli)
//   H =  [ 0    I  0 ]   p     fixed-effect prior rows
//        [ 0    0  I ]   3r    basis-coefficient prior rows
//        [ I_n  0  0 ]   n     fine-scale prior rows
//
// so H'H = [[2I, B],[B', I + B'B]] with B = [X G], and the normal-equation
// solve reduces to a (p+3r) Schur system S = I + B'B/2 -- no n-sized
// factorization.  The orthogonal complement of col(H) is spanned in closed
// form by N = [I; -X'; -G'; -I] (H'N = 0 identically); Q is N orthonormalized
// through an equilibrated Cholesky of N'N = 2I + XX' + GG'.  A general QR
// fallback `build_Q` covers arbitrary full-column-rank H and fixes the same
// sign convention (first nonzero entry of each column positive).

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/QR>
#include <cmath>
#include <memory>
#include <mutex>
#include <string>

#include "epr/basis.hpp"
#include "epr/data.hpp"
#include "epr/dy.hpp"
#include "epr/errors.hpp"

namespace epr {

struct ModelDims {
  int n1s = 0, n2 = 0, n1 = 0;  // data row-block heights
  int p1 = 0, p2 = 0, p3 = 0;   // covariate widths per response
  int r = 0;                    // G column-block width (G is n x 3r)

  int n() const { return n1s + n2 + n1; }
  int p() const { return p1 + p2 + p3; }
  int q_cols() const { return n(); }                 // dim of the null space of H'
  int zeta_dim() const { return n() + p() + 3 * r; } // columns of H
  int w_dim() const { return 2 * n() + p() + 3 * r; }// rows of H

  void validate() const {
    if (n1s < 0 || n2 < 0 || n1 < 0 || p1 < 0 || p2 < 0 || p3 < 0 || r < 0)
      throw ConfigError("dims: negative block size");
    if (n() == 0) throw ConfigError("dims: model has no data rows");
  }
};

// Block-diagonal covariate matrix over the three responses.
inline Mat build_X(const MultiTypeDataset& d) {
  const int n1s = d.n1s(), n2 = d.n2(), n1 = d.n1();
  const int p1 = d.p1(), p2 = d.p2(), p3 = d.p3();
  Mat X = Mat::Zero(n1s + n2 + n1, p1 + p2 + p3);
  X.block(0, 0, n1s, p1) = d.x1_fire();
  X.block(n1s, p1, n2, p2) = d.x2;
  X.block(n1s + n2, p1 + p2, n1, p3) = d.x3;
  return X;
}

inline Mat build_H(const Mat& X, const Mat& G) {
  if (X.rows() != G.rows()) throw ConfigError("build_H: X and G row counts differ");
  const int n = static_cast<int>(X.rows());
  const int p = static_cast<int>(X.cols());
  const int g = static_cast<int>(G.cols());
  Mat H = Mat::Zero(2 * n + p + g, n + p + g);
  H.block(0, 0, n, n).setIdentity();
  H.block(0, n, n, p) = X;
  H.block(0, n + p, n, g) = G;
  H.block(n, n, p, p).setIdentity();
  H.block(n + p, n + p, g, g).setIdentity();
  H.block(n + p + g, 0, n, n).setIdentity();
  return H;
}

namespace detail {
// Flip columns so the first entry of magnitude above a relative floor is
// positive; exact mirror images across runs collapse to one representative.
inline void normalize_column_signs(Mat& Q) {
  for (int j = 0; j < Q.cols(); ++j) {
    const double floor = 1e-12 * Q.col(j).cwiseAbs().maxCoeff();
    for (int i = 0; i < Q.rows(); ++i) {
      const double v = Q(i, j);
      if (std::fabs(v) > floor) {
        if (v < 0.0) Q.col(j) = -Q.col(j);
        break;
      }
    }
  }
}
}  // namespace detail

// Orthonormal basis of null(H') for arbitrary full-column-rank H: the
// trailing columns of the full Householder Q factor.
inline Mat build_Q(const Mat& H) {
  const int rows = static_cast<int>(H.rows());
  const int cols = static_cast<int>(H.cols());
  if (rows <= cols) throw ConfigError("build_Q: H must have more rows than columns");
  Eigen::HouseholderQR<Mat> qr(H);
  // rank check via the R diagonal
  const auto& R = qr.matrixQR();
  double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
  for (int j = 0; j < cols; ++j) {
    const double v = std::fabs(R(j, j));
    dmax = std::max(dmax, v);
    dmin = std::min(dmin, v);
  }
  if (!(dmin > 0.0) || dmin / dmax < 1e-13)
    throw NumericalError("build_Q: H A rank deficient to working precision (diag ratio " + std::to_string(dmin / dmax) + ")");
  Mat Qfull = qr.householderQ() * Mat::Identity(rows, rows);
  Mat Q = Qfull.rightCols(rows - cols);
  detail::normalize_column_signs(Q);
  return Q;
}

// Natural-parameter vectors of Theorem-1 form for the augmented system; row
// order matches H.  Data rows carry the observations; every prior row is the
// standard-Gaussian spec (0, 1/2).
inline DYVectorSpec build_alpha_kappa(const MultiTypeDataset& d, const HyperState& hyper) {
  if (!(hyper.alpha_xi > 0.0)) throw ConfigError("build_alpha_kappa: alpha_xi must be > 0");
  d.validate();
  DYVectorSpec vs;
  const int n = d.n1s() + d.n2() + d.n1();
  vs.specs.reserve(2 * n);
  for (int i = 0; i < d.n1s(); ++i)
    vs.specs.push_back({d.z1[i] / d.sigma2_1[i], 0.5 / d.sigma2_1[i], PartitionTag::gaussian});
  for (int j = 0; j < d.n2(); ++j)
    vs.specs.push_back({d.z2[j] / d.sigma2_2[j], 0.5 / d.sigma2_2[j], PartitionTag::gaussian});
  for (int k = 0; k < d.n1(); ++k)
    vs.specs.push_back({d.z3[k] + hyper.alpha_xi, 1.0 + 2.0 * hyper.alpha_xi, PartitionTag::bernoulli});
  return vs;
}

inline void append_prior_rows(DYVectorSpec& vs, int count) {
  for (int i = 0; i < count; ++i) vs.specs.push_back({0.0, 0.5, PartitionTag::gaussian});
}

// Diagonal scaling D(theta) = blkdiag(I_n, sb I_p, se I_3r, sx I_n) acting on
// the augmented vector w.
struct DiagScaling {
  ModelDims dims;
  ThetaDraw theta;

  void validate() const {
    if (!(theta.sigma_beta > 0.0 && theta.sigma_eta > 0.0 && theta.sigma_xi > 0.0))
      throw ConfigError("D(theta): scales must be positive");
  }

  Vec diagonal() const {
    const int n = dims.n(), p = dims.p(), g = 3 * dims.r;
    Vec d(dims.w_dim());
    d.segment(0, n).setOnes();
    d.segment(n, p).setConstant(theta.sigma_beta);
    d.segment(n + p, g).setConstant(theta.sigma_eta);
    d.segment(n + p + g, n).setConstant(theta.sigma_xi);
    return d;
  }

  Vec apply(const Vec& w) const { return diagonal().cwiseProduct(w); }
  Vec apply_inverse(const Vec& v) const { return v.cwiseQuotient(diagonal()); }

  // scale the rows of a (w_dim x k) batch in place
  void scale_rows(Mat& W) const {
    const int n = dims.n(), p = dims.p(), g = 3 * dims.r;
    W.middleRows(n, p) *= theta.sigma_beta;
    W.middleRows(n + p, g) *= theta.sigma_eta;
    W.middleRows(n + p + g, n) *= theta.sigma_xi;
  }
};

inline DiagScaling build_D(const ThetaDraw& theta, const ModelDims& dims) {
  DiagScaling d{dims, theta};
  d.validate();
  return d;
}

class ModelMatrices {
 public:
  ModelDims dims;
  BasisBlockLayout layout;
  Mat X;             // n x p block diagonal
  Mat G;             // n x 3r
  Mat H;             // (2n+p+3r) x (n+p+3r)
  DYVectorSpec w_spec;
  double alpha_xi = 1.0;

  ModelMatrices() : cache_(std::make_unique<Cache>()) {}

  DiagScaling make_D(const ThetaDraw& theta) const { return build_D(theta, dims); }

  // N' u for a stacked (2n+p+3r) x k batch, N = [I; -X'; -G'; -I].
  Mat apply_Nt(const Mat& U) const {
    const int n = dims.n(), p = dims.p(), g = 3 * dims.r;
    Mat out = U.topRows(n) - U.bottomRows(n);
    out.noalias() -= X * U.middleRows(n, p);
    out.noalias() -= G * U.middleRows(n + p, g);
    return out;
  }

  // Signed orthonormalizer W: Q = N * W, columns of Q sign-normalized.
  const Mat& null_basis_w() const {
    std::call_once(cache_->w_once, [this] { build_w(); });
    return cache_->W;
  }

  // Dense orthonormal complement, materialized on first use.
  const Mat& Q() const {
    std::call_once(cache_->q_once, [this] {
      const Mat& W = null_basis_w();
      const int n = dims.n(), p = dims.p(), g = 3 * dims.r;
      Mat Q(dims.w_dim(), n);
      Q.topRows(n) = W;
      Q.middleRows(n, p).noalias() = -X.transpose() * W;
      Q.middleRows(n + p, g).noalias() = -G.transpose() * W;
      Q.bottomRows(n) = -W;
      cache_->Q = std::move(Q);
    });
    return cache_->Q;
  }

  double null_gram_rcond() const {
    null_basis_w();
    return cache_->rcond;
  }

 private:
  struct Cache {
    std::once_flag w_once, q_once;
    Mat W;
    Mat Q;
    double rcond = 0.0;
  };

  void build_w() const {
    const int n = dims.n();
    Mat M = 2.0 * Mat::Identity(n, n);
    M.selfadjointView<Eigen::Lower>().rankUpdate(X);
    M.selfadjointView<Eigen::Lower>().rankUpdate(G);
    M = M.selfadjointView<Eigen::Lower>();
    // Jacobi equilibration keeps the Cholesky stable under wildly scaled
    // covariates (raw ranges here span ~1e5).
    Vec dscale = M.diagonal().cwiseSqrt().cwiseInverse();
    Mat Mt = dscale.asDiagonal() * M * dscale.asDiagonal();
    Eigen::LLT<Mat> llt(Mt);
    if (llt.info() != Eigen::Success)
      throw NumericalError("null-space gram matrix not positive definite after equilibration");
    const Mat R = llt.matrixU();
    double dmin = R(0, 0), dmax = R(0, 0);
    for (int j = 1; j < n; ++j) {
      dmin = std::min(dmin, R(j, j));
      dmax = std::max(dmax, R(j, j));
    }
    cache_->rcond = (dmin / dmax) * (dmin / dmax);
    // W = D R^{-1}: columns orthonormalize N w.r.t. N'N
    Mat W = R.triangularView<Eigen::Upper>().solve(Mat::Identity(n, n));
    W = dscale.asDiagonal() * W;
    // sign fix on the full column of Q = [W; -X'W; -G'W; -W]; the leading
    // block W is upper triangular with positive diagonal, so the first
    // nonzero lives in its top rows.
    detail::normalize_column_signs(W);
    cache_->W = std::move(W);
  }

  std::unique_ptr<Cache> cache_;
};

inline ModelMatrices assemble_model(const MultiTypeDataset& d, const HyperState& hyper,
                                    const KnotSet& k1, const KnotSet& k2, const KnotSet& k3) {
  d.validate();
  hyper.validate();
  ModelMatrices m;
  m.alpha_xi = hyper.alpha_xi;
  m.G = build_G(d.fire_points(), d.regions, d.grid, d.points, k1, k2, k3, &m.layout);
  m.X = build_X(d);
  m.dims = ModelDims{d.n1s(), d.n2(), d.n1(), d.p1(), d.p2(), d.p3(), m.layout.r};
  m.dims.validate();
  m.H = build_H(m.X, m.G);
  m.w_spec = build_alpha_kappa(d, hyper);
  append_prior_rows(m.w_spec, m.dims.zeta_dim());
  return m;
}

}  // namespace epr
