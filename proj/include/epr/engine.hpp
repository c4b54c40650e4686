#pragma once
// Exact posterior replicate engine.
//
// One replicate: draw theta from its prior, draw the augmented vector w
// componentwise from the (conjugate, independent) posterior specs, set
// u = D(theta) w, and project
//
//   zeta = (H'H)^{-1} H' u          (exact posterior draw of (xi, beta, eta))
//   q    = Q' u                     (orthogonal remainder; discrepancy seed)
//
// Replicates are independent, so batches of replicates become dense GEMMs.
// The normal-equation solve uses the Schur system S = I + B'B/2 (B = [X G]);
// q uses the closed-form null basis (see assembly.hpp).  Each replicate owns
// a counter-derived substream, which makes output bytes independent of batch
// and thread scheduling.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "epr/assembly.hpp"
#include "epr/data.hpp"
#include "epr/dy.hpp"
#include "epr/errors.hpp"
#include "epr/rng.hpp"
#include "epr/scoring.hpp"
#include "epr/special.hpp"

namespace epr {

struct Replicate {
  Vec zeta;  // (n + p + 3r), blocks (xi, beta, eta)
  Vec q;     // n
  ThetaDraw theta;
};

struct PosteriorReplicates {
  ModelDims dims;
  std::uint64_t seed = 0;
  Mat zeta;   // n_reps x (n+p+3r)
  Mat q;      // n_reps x n
  Mat theta;  // n_reps x 3: sigma_beta, sigma_eta, sigma_xi
  double seconds = 0.0;  // wall-clock of the generating run (not an artifact field)

  int n_reps() const { return static_cast<int>(zeta.rows()); }

  // (p+3r) x n_reps view of the prediction-relevant block, sample per column
  Mat beta_eta_samples() const {
    return zeta.rightCols(dims.p() + 3 * dims.r).transpose();
  }
};

class EprSolver {
 public:
  explicit EprSolver(const ModelMatrices& model) : model_(&model) {
    const ModelDims& d = model.dims;
    const int m = d.p() + 3 * d.r;
    Mat S = Mat::Identity(m, m);
    if (m > 0) {
      Mat B(d.n(), m);
      B.leftCols(d.p()) = model.X;
      B.rightCols(3 * d.r) = model.G;
      S.selfadjointView<Eigen::Lower>().rankUpdate(B.transpose(), 0.5);
      S = S.selfadjointView<Eigen::Lower>();
    }
    dscale_ = S.diagonal().cwiseSqrt().cwiseInverse();
    Mat St = dscale_.asDiagonal() * S * dscale_.asDiagonal();
    llt_.compute(St);
    if (llt_.info() != Eigen::Success)
      throw NumericalError("EprSolver: Schur system not positive definite (condition estimate " +
                           std::to_string(condition_estimate_from(St)) + ")");
    const Mat& L = llt_.matrixLLT();
    double dmin = L(0, 0), dmax = L(0, 0);
    for (int j = 1; j < m; ++j) {
      dmin = std::min(dmin, L(j, j));
      dmax = std::max(dmax, L(j, j));
    }
    cond_ = m > 0 ? (dmax / dmin) * (dmax / dmin) : 1.0;
    if (!(cond_ < 1e14))
      throw NumericalError("EprSolver: Schur system numerically singular, condition estimate " +
                           std::to_string(cond_));
  }

  const ModelMatrices& model() const { return *model_; }
  double condition_estimate() const { return cond_; }

  // zeta = (H'H)^{-1} H' U for u-columns U ((2n+p+3r) x k); returns (n+p+3r) x k.
  Mat zeta_batch(const Mat& U) const {
    const ModelDims& d = model_->dims;
    const int n = d.n(), p = d.p(), g = 3 * d.r;
    const Mat C1 = U.topRows(n) + U.bottomRows(n);
    // rhs of the Schur system: (c23) - B' c1 / 2 with c23 = B'U_y + U_prior
    Mat R(p + g, U.cols());
    const Mat Ymod = U.topRows(n) - 0.5 * C1;
    R.topRows(p).noalias() = model_->X.transpose() * Ymod;
    R.bottomRows(g).noalias() = model_->G.transpose() * Ymod;
    R.topRows(p) += U.middleRows(n, p);
    R.bottomRows(g) += U.middleRows(n + p, g);
    Mat Zbe = dscale_.asDiagonal() * llt_.solve(dscale_.asDiagonal() * R);
    Mat Z(n + p + g, U.cols());
    Z.bottomRows(p + g) = Zbe;
    Z.topRows(n) = 0.5 * C1;
    Z.topRows(n).noalias() -= 0.5 * model_->X * Zbe.topRows(p);
    Z.topRows(n).noalias() -= 0.5 * model_->G * Zbe.bottomRows(g);
    return Z;
  }

  // q = Q'U via the null-basis factor, n x k.
  Mat q_batch(const Mat& U) const {
    return model_->null_basis_w().transpose() * model_->apply_Nt(U);
  }

  Vec zeta_from(const Vec& u) const { return zeta_batch(u).col(0); }
  Vec q_from(const Vec& u) const { return q_batch(u).col(0); }

 private:
  static double condition_estimate_from(const Mat& S) {
    Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  }

  const ModelMatrices* model_;
  Eigen::LLT<Mat> llt_;
  Vec dscale_;
  double cond_ = 1.0;
};

// Deterministic per-replicate draw order: theta, then w components in row order.
inline Replicate sample_replicate(const EprSolver& solver, const DYVectorSpec& w_spec,
                                  const HyperState& hyper, RandomStream& rng) {
  const ModelMatrices& m = solver.model();
  if (w_spec.size() != m.dims.w_dim())
    throw ConfigError("sample_replicate: spec length " + std::to_string(w_spec.size()) +
                      " != augmented dimension " + std::to_string(m.dims.w_dim()));
  Replicate rep;
  rep.theta = draw_theta(hyper, rng);
  Vec w = sample_w(w_spec, rng);
  const Vec u = m.make_D(rep.theta).apply(w);
  rep.zeta = solver.zeta_from(u);
  rep.q = solver.q_from(u);
  return rep;
}

inline Replicate replicate_from_w(const EprSolver& solver, const ThetaDraw& theta, const Vec& w) {
  Replicate rep;
  rep.theta = theta;
  const Vec u = solver.model().make_D(theta).apply(w);
  rep.zeta = solver.zeta_from(u);
  rep.q = solver.q_from(u);
  return rep;
}

// Batched engine run against an explicit component spec.  Threads partition
// the replicate index range; per-replicate substreams keep output invariant
// to the partition.
inline PosteriorReplicates run_epr_spec(const ModelMatrices& model, const DYVectorSpec& w_spec,
                                        const HyperState& hyper, int n_reps, std::uint64_t seed,
                                        int n_threads = 1) {
  if (n_reps < 1) throw ConfigError("run_epr: n_reps must be >= 1");
  if (n_threads < 1) n_threads = 1;
  hyper.validate();
  w_spec.validate();
  if (w_spec.size() != model.dims.w_dim())
    throw ConfigError("run_epr: spec length does not match model dimensions");
  const auto t0 = std::chrono::steady_clock::now();
  const EprSolver solver(model);
  model.null_basis_w();  // force one-time factor build before timing-critical loop

  PosteriorReplicates out;
  out.dims = model.dims;
  out.seed = seed;
  out.zeta.resize(n_reps, model.dims.zeta_dim());
  out.q.resize(n_reps, model.dims.n());
  out.theta.resize(n_reps, 3);

  constexpr int kBatch = 128;
  const int n_batches = (n_reps + kBatch - 1) / kBatch;
  std::vector<std::thread> workers;
  std::atomic<int> next_batch{0};
  std::string error_msg;
  std::mutex error_mu;
  auto worker = [&]() {
    Mat U(model.dims.w_dim(), kBatch);
    for (;;) {
      const int b = next_batch.fetch_add(1);
      if (b >= n_batches) return;
      const int lo = b * kBatch;
      const int hi = std::min(n_reps, lo + kBatch);
      const int k = hi - lo;
      try {
        for (int t = lo; t < hi; ++t) {
          RandomStream rng = RandomStream::substream(seed, stream_purpose::epr_replicate, static_cast<std::uint64_t>(t));
          const ThetaDraw theta = draw_theta(hyper, rng);
          Vec w = sample_w(w_spec, rng);
          const DiagScaling D = model.make_D(theta);
          U.col(t - lo) = D.apply(w);
          out.theta(t, 0) = theta.sigma_beta;
          out.theta(t, 1) = theta.sigma_eta;
          out.theta(t, 2) = theta.sigma_xi;
        }
        const Mat Z = solver.zeta_batch(U.leftCols(k));
        const Mat Qc = solver.q_batch(U.leftCols(k));
        out.zeta.middleRows(lo, k) = Z.transpose();
        out.q.middleRows(lo, k) = Qc.transpose();
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(error_mu);
        if (error_msg.empty()) error_msg = e.what();
        next_batch.store(n_batches);
        return;
      }
    }
  };
  if (n_threads == 1) {
    worker();
  } else {
    for (int i = 0; i < n_threads; ++i) workers.emplace_back(worker);
    for (auto& th : workers) th.join();
  }
  if (!error_msg.empty()) throw NumericalError("run_epr: " + error_msg);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline PosteriorReplicates run_epr(const ModelMatrices& model, const MultiTypeDataset& data,
                                   const HyperState& hyper, int n_reps, std::uint64_t seed,
                                   int n_threads = 1) {
  DYVectorSpec spec = build_alpha_kappa(data, hyper);
  append_prior_rows(spec, model.dims.zeta_dim());
  return run_epr_spec(model, spec, hyper, n_reps, seed, n_threads);
}

// Discrepancy draws delta = -D(theta)^{-1} Q q per replicate; rows align with
// replicates, columns with the augmented vector (data rows first).
inline Mat discrepancy(const PosteriorReplicates& reps, const ModelMatrices& model) {
  const ModelDims& d = model.dims;
  if (reps.q.cols() != d.n()) throw ConfigError("discrepancy: replicates do not match model");
  const int n = d.n(), p = d.p(), g = 3 * d.r;
  const Mat V = model.null_basis_w() * reps.q.transpose();  // n x reps, = top block of Q q
  Mat delta(reps.n_reps(), d.w_dim());
  delta.leftCols(n) = -V.transpose();
  delta.middleCols(n, p) = (model.X.transpose() * V).transpose();
  delta.middleCols(n + p, g) = (model.G.transpose() * V).transpose();
  delta.rightCols(n) = V.transpose();
  for (int t = 0; t < reps.n_reps(); ++t) {
    delta.row(t).segment(n, p) /= reps.theta(t, 0);
    delta.row(t).segment(n + p, g) /= reps.theta(t, 1);
    delta.row(t).segment(n + p + g, n) /= reps.theta(t, 2);
  }
  return delta;
}

// Exact posterior draws of the latent data-row process y = (y1 at observed
// points, y2 over regions, y3 at all points): the data rows of D(theta)w =
// H zeta + Q q, i.e. xi + X beta + G eta + W q with W the top block of Q.
// One column per replicate.
inline Mat latent_data_samples(const ModelMatrices& model, const PosteriorReplicates& reps) {
  const ModelDims& d = model.dims;
  if (reps.q.cols() != d.n() || reps.zeta.cols() != d.zeta_dim())
    throw ConfigError("latent_data_samples: replicates do not match model");
  Mat y = reps.zeta.leftCols(d.n()).transpose();                            // xi block
  y.noalias() += model.X * reps.zeta.middleCols(d.n(), d.p()).transpose();  // X beta
  y.noalias() += model.G * reps.zeta.rightCols(3 * d.r).transpose();        // G eta
  y.noalias() += model.null_basis_w() * reps.q.transpose();                 // -delta_y
  return y;
}

// Theorem-2 closed form: cov(y*, delta_y | z) for fixed theta,
//   J H (H'H)^{-1} H' D Sigma_w D (I - H (H'H)^{-1} H') J',  J = [I_n 0 0 0].
inline Mat signal_noise_cov(const ModelMatrices& model, const ThetaDraw& theta,
                            const DYVectorSpec& w_spec) {
  const ModelDims& d = model.dims;
  if (w_spec.size() != d.w_dim()) throw ConfigError("signal_noise_cov: spec/model mismatch");
  const EprSolver solver(model);
  const int n = d.n();
  const Vec dd = model.make_D(theta).diagonal();
  const Vec v = dd.array().square() * w_spec.variances().array();  // D Sigma_w D diagonal
  Mat E = Mat::Zero(d.w_dim(), n);
  E.topRows(n).setIdentity();
  const Mat PE = model.H * solver.zeta_batch(E);                   // P J'
  // J P V J' - J P V P J'  with V = diag(v)
  Mat cov = PE.topRows(n).transpose() * v.head(n).asDiagonal();
  cov.noalias() -= PE.transpose() * v.asDiagonal() * PE;
  return cov;
}

// log |det D(theta)|: hook for importance reweighting of prior theta draws.
inline double log_det_d(const ThetaDraw& theta, const ModelDims& d) {
  return d.p() * std::log(theta.sigma_beta) + 3.0 * d.r * std::log(theta.sigma_eta) +
         d.n() * std::log(theta.sigma_xi);
}

// ---------------------------------------------------------------------------
// Prediction of the filtered process x'beta + g*'eta (logistic for response 3)

struct PredictionTargets {
  ModelDims dims;
  Mat T1, T2, T3;  // rows x (p+3r): covariate part then basis part
  std::vector<std::string> ids1, ids2, ids3;
};

// Targets at the observed supports: every point for responses 1 and 3, every
// region for response 2.
inline PredictionTargets make_targets(const MultiTypeDataset& data, const ModelDims& dims,
                                      const KnotSet& k1, const KnotSet& k2, const KnotSet& k3) {
  PredictionTargets t;
  t.dims = dims;
  const int p = dims.p(), g = 3 * dims.r;
  const int n_pts = data.n1();
  t.T1.resize(n_pts, p + g);
  t.T3.resize(n_pts, p + g);
  t.T1.setZero();
  t.T3.setZero();
  for (int i = 0; i < n_pts; ++i) {
    t.T1.row(i).segment(0, dims.p1) = data.x1.row(i);
    t.T1.row(i).segment(p, g) = g_star_point1(data.points(i, 0), data.points(i, 1), k1, dims.r).transpose();
    t.T3.row(i).segment(dims.p1 + dims.p2, dims.p3) = data.x3.row(i);
    t.T3.row(i).segment(p, g) = g_star_point3(data.points(i, 0), data.points(i, 1), k3, dims.r).transpose();
    t.ids1.push_back(std::to_string(i));
    t.ids3.push_back(std::to_string(i));
  }
  t.T2.resize(data.n2(), p + g);
  t.T2.setZero();
  for (int j = 0; j < data.n2(); ++j) {
    t.T2.row(j).segment(dims.p1, dims.p2) = data.x2.row(j);
    t.T2.row(j).segment(p, g) = g_star_region(data.regions[j], k2, data.grid, dims.r).transpose();
    t.ids2.push_back(data.regions[j].id);
  }
  return t;
}

// targets x m sample matrix of the filtered process; columns follow samples.
inline Mat filtered_samples(const Mat& T, const Mat& beta_eta /* (p+3r) x m */) {
  if (T.cols() != beta_eta.rows()) throw ConfigError("filtered_samples: dimension mismatch");
  return T * beta_eta;
}

struct SurfaceBlock {
  std::vector<std::string> ids;
  Vec mean, lo, med, hi;
};

struct PredictionSurface {
  double level = 0.95;
  SurfaceBlock y1, y2, y3;  // y3 on the probability scale
};

namespace detail {
inline SurfaceBlock summarize_rows(const Mat& samples, const std::vector<std::string>& ids,
                                   double level, bool prob_scale) {
  SurfaceBlock b;
  b.ids = ids;
  const int n = static_cast<int>(samples.rows());
  const int m = static_cast<int>(samples.cols());
  b.mean.resize(n);
  b.lo.resize(n);
  b.med.resize(n);
  b.hi.resize(n);
  const double a = 0.5 * (1.0 - level);
  std::vector<double> row(m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) row[j] = prob_scale ? logistic(samples(i, j)) : samples(i, j);
    double s = 0.0;
    for (double v : row) s += v;
    b.mean[i] = s / m;
    std::sort(row.begin(), row.end());
    auto pick = [&](double p) {
      int k = static_cast<int>(std::ceil(p * m));
      k = std::max(1, std::min(m, k));
      return row[k - 1];
    };
    b.lo[i] = pick(a);
    b.med[i] = pick(0.5);
    b.hi[i] = pick(1.0 - a);
    if (!(b.lo[i] <= b.mean[i] && b.mean[i] <= b.hi[i]))
      throw NumericalError("prediction summary violates lo <= mean <= hi at target " + std::to_string(i));
  }
  return b;
}
}  // namespace detail

inline PredictionSurface predict(const PosteriorReplicates& reps, const PredictionTargets& targets,
                                 double level = 0.95) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("predict: level outside (0,1)");
  const Mat be = reps.beta_eta_samples();
  PredictionSurface s;
  s.level = level;
  s.y1 = detail::summarize_rows(filtered_samples(targets.T1, be), targets.ids1, level, false);
  s.y2 = detail::summarize_rows(filtered_samples(targets.T2, be), targets.ids2, level, false);
  s.y3 = detail::summarize_rows(filtered_samples(targets.T3, be), targets.ids3, level, true);
  return s;
}

}  // namespace epr
