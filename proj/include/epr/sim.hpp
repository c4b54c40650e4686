#pragma once
// Simulation harness: a unit-square fine grid of point locations, an
// irregular contiguous partition into regions, smooth synthetic covariate
// fields, data generation for all three responses (with optional injected
// discrepancy drawn through the model's own orthogonal complement and
// coupled to the basis signal), and the
// paired comparison engine (exact replicates vs the MCMC baseline) that
// produces per-replicate scores and CPU columns.
//
// Fixed-across-replicates structure (grid, partition, covariates, knots) is
// derived from the master seed alone; per-replicate randomness comes from
// counter-derived substreams, so replicate t is reproducible in isolation.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "epr/assembly.hpp"
#include "epr/basis.hpp"
#include "epr/data.hpp"
#include "epr/engine.hpp"
#include "epr/errors.hpp"
#include "epr/mcmc.hpp"
#include "epr/rng.hpp"
#include "epr/scoring.hpp"

namespace epr {

struct SimConfig {
  int nx = 20, ny = 20;          // fine grid (points = cell centers)
  int n_regions = 225;
  int r = 50;                    // shared knot count (responses 1, 2)
  int r3 = 25;                   // coarser Bernoulli knot count
  double sigma2_1 = 1.0;         // known observation variances
  double sigma2_2 = 1.0;
  double sigma_xi_gen = 0.0;     // generator fine-scale sd (0: smooth latent truth)
  bool discrepancy = true;
  int n_replicates = 100;
  int epr_reps = 500;
  int crps_thin = 10;            // thin MCMC draws for the O(m^2-ish) CRPS
  std::uint64_t seed = 92442;
  int threads = 1;
  // fixed-effect truth: (intercept, lst, rain, veg, elev), (intercept, income), (intercept)
  Eigen::VectorXd beta1 = (Eigen::VectorXd(5) << 1.17, -0.049, 0.0008, -0.666, 0.0000048).finished();
  Eigen::VectorXd beta2 = (Eigen::VectorXd(2) << -1.539, 0.0000242).finished();
  Eigen::VectorXd beta3 = (Eigen::VectorXd(1) << -1.786).finished();
  HyperState fit_hyper = HyperState::point_mass(1.0, 1.0, 1.0, 1.0);
  McmcConfig mcmc;

  void validate() const {
    if (nx < 2 || ny < 2) throw ConfigError("sim: grid must be at least 2x2");
    if (n_regions < 1 || n_regions > nx * ny) throw ConfigError("sim: region count outside [1, cells]");
    if (r < 1 || r3 < 1 || r3 > r) throw ConfigError("sim: knot counts need 1 <= r3 <= r");
    if (!(sigma2_1 > 0.0 && sigma2_2 > 0.0)) throw ConfigError("sim: observation variances must be positive");
    if (sigma_xi_gen < 0.0) throw ConfigError("sim: sigma_xi_gen must be >= 0");
    if (n_replicates < 1) throw ConfigError("sim: n_replicates must be >= 1");
    if (epr_reps < 2) throw ConfigError("sim: epr_reps must be >= 2");
    if (crps_thin < 1) throw ConfigError("sim: crps_thin must be >= 1");
    if (beta1.size() != 5 || beta2.size() != 2 || beta3.size() != 1)
      throw ConfigError("sim: fixed-effect truth has fixed lengths (5, 2, 1)");
    mcmc.validate();
    fit_hyper.validate();
  }
};

inline CellGrid make_grid(int nx, int ny) {
  CellGrid g;
  g.centers.resize(nx * ny, 2);
  const double dx = 1.0 / nx, dy = 1.0 / ny;
  int idx = 0;
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix, ++idx) {
      g.centers(idx, 0) = (ix + 0.5) * dx;
      g.centers(idx, 1) = (iy + 0.5) * dy;
    }
  g.cell_area = dx * dy;
  return g;
}

// Contiguous irregular partition by randomized greedy merge of singleton
// cells (4-neighbour adjacency); region ids follow the smallest member cell.
inline std::vector<ArealRegion> make_partition(int nx, int ny, int n_regions, RandomStream& rng) {
  const int n_cells = nx * ny;
  std::vector<int> parent(n_cells);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  int count = n_cells;
  int guard = 0;
  while (count > n_regions) {
    if (++guard > 1000 * n_cells) throw NumericalError("make_partition: merge loop failed to converge");
    const int c = static_cast<int>(rng.uniform() * n_cells);
    const int ix = c % nx, iy = c / nx;
    // random neighbour among the valid 4
    int nbr = -1;
    const int dirs[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    const int start = static_cast<int>(rng.uniform() * 4);
    for (int t = 0; t < 4 && nbr < 0; ++t) {
      const int jx = ix + dirs[(start + t) % 4][0];
      const int jy = iy + dirs[(start + t) % 4][1];
      if (jx < 0 || jx >= nx || jy < 0 || jy >= ny) continue;
      const int cand = jy * nx + jx;
      if (find(cand) != find(c)) nbr = cand;
    }
    if (nbr < 0) continue;
    parent[find(nbr)] = find(c);
    --count;
  }
  std::vector<std::vector<int>> groups(n_cells);
  for (int c = 0; c < n_cells; ++c) groups[find(c)].push_back(c);
  std::vector<ArealRegion> regions;
  for (int rep = 0; rep < n_cells; ++rep)
    if (!groups[rep].empty()) {
      ArealRegion reg;
      reg.cells = groups[rep];
      regions.push_back(std::move(reg));
    }
  std::sort(regions.begin(), regions.end(),
            [](const ArealRegion& a, const ArealRegion& b) { return a.cells.front() < b.cells.front(); });
  for (std::size_t i = 0; i < regions.size(); ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "R%03zu", i);
    regions[i].id = buf;
  }
  return regions;
}

namespace detail {
// Smooth random field: low-order polynomial plus a few Gaussian bumps,
// affinely rescaled to [lo, hi] over the supplied locations.
inline Vec smooth_field(const PointMat& pts, double lo, double hi, RandomStream& rng) {
  const int n = static_cast<int>(pts.rows());
  double c[6];
  for (double& v : c) v = rng.normal();
  struct Bump { double x, y, b, a; };
  Bump bumps[3];
  for (Bump& u : bumps) {
    u.x = rng.uniform();
    u.y = rng.uniform();
    u.b = rng.uniform(0.1, 0.3);
    u.a = 2.0 * rng.normal();
  }
  Vec f(n);
  for (int i = 0; i < n; ++i) {
    const double x = pts(i, 0), y = pts(i, 1);
    double v = c[0] + c[1] * x + c[2] * y + c[3] * x * y + c[4] * x * x + c[5] * y * y;
    for (const Bump& u : bumps) {
      const double dx = x - u.x, dy = y - u.y;
      v += u.a * std::exp(-(dx * dx + dy * dy) / (2.0 * u.b * u.b));
    }
    f[i] = v;
  }
  const double fmin = f.minCoeff(), fmax = f.maxCoeff();
  if (!(fmax > fmin)) return Vec::Constant(n, 0.5 * (lo + hi));
  return ((f.array() - fmin) / (fmax - fmin) * (hi - lo) + lo).matrix();
}
}  // namespace detail

struct SimTruth {
  Vec beta;            // (p) stacked (beta1, beta2, beta3)
  Vec eta;             // (3r)
  Vec y1, y3, prob3;   // per point
  Vec y2;              // per region
  Vec delta1, delta3;  // per point (zero when discrepancy is off)
  Vec delta2;          // per region
};

// Fixed geometry + generator model shared by every replicate of a setting.
struct SimContext {
  SimConfig config;
  CellGrid grid;
  std::vector<ArealRegion> regions;
  KnotSet k1, k2, k3;
  Mat x1_all, x2, x3;       // covariates (points / regions / points)
  ModelMatrices gen_model;  // full geometry: every point treated as observed
  // Coupling for the injected discrepancy (built only when discrepancy is
  // on): q = q_noise_root * eps + q_load_eta * eta keeps q marginally
  // standard normal while tying the data-side error W q to the basis
  // signal, so the injected field covaries with G eta in the same
  // (positive) direction as the dominant entries of the posterior
  // signal-to-noise covariance J P V J' - J P V P J'.
  Mat q_load_eta;    // tau * W'G with tau = 1/smax(W'G)
  Mat q_noise_root;  // symmetric sqrt of I - tau^2 W'G G'W
};

inline SimContext make_sim_context(const SimConfig& cfg) {
  cfg.validate();
  SimContext ctx;
  ctx.config = cfg;
  ctx.grid = make_grid(cfg.nx, cfg.ny);
  RandomStream part_rng = RandomStream::substream(cfg.seed, stream_purpose::sim_partition, 0);
  ctx.regions = make_partition(cfg.nx, cfg.ny, cfg.n_regions, part_rng);
  const BoundingBox box{0.0, 0.0, 1.0, 1.0};
  ctx.k1 = select_knots(box, cfg.r);
  ctx.k2 = ctx.k1;
  ctx.k3 = select_knots(box, cfg.r3);

  const int n_pts = ctx.grid.size();
  const int n_reg = static_cast<int>(ctx.regions.size());
  // covariate fields: lst, rain, veg, elev at points; income at regions
  const double ranges[4][2] = {{10.0, 45.0}, {100.0, 1500.0}, {0.05, 0.95}, {0.0, 3000.0}};
  ctx.x1_all.resize(n_pts, 5);
  ctx.x1_all.col(0).setOnes();
  for (int f = 0; f < 4; ++f) {
    RandomStream rng = RandomStream::substream(cfg.seed, stream_purpose::sim_covariate, static_cast<std::uint64_t>(f));
    ctx.x1_all.col(f + 1) = detail::smooth_field(ctx.grid.centers, ranges[f][0], ranges[f][1], rng);
  }
  {
    RandomStream rng = RandomStream::substream(cfg.seed, stream_purpose::sim_covariate, 4);
    const Vec cell_field = detail::smooth_field(ctx.grid.centers, 0.0, 1.0, rng);
    Vec reg_field(n_reg);
    for (int j = 0; j < n_reg; ++j) {
      double acc = 0.0;
      for (int c : ctx.regions[j].cells) acc += cell_field[c];
      reg_field[j] = acc / ctx.regions[j].cells.size();
    }
    const double lo = 30000.0, hi = 110000.0;
    const double fmin = reg_field.minCoeff(), fmax = reg_field.maxCoeff();
    ctx.x2.resize(n_reg, 2);
    ctx.x2.col(0).setOnes();
    if (fmax > fmin)
      ctx.x2.col(1) = ((reg_field.array() - fmin) / (fmax - fmin) * (hi - lo) + lo).matrix();
    else
      ctx.x2.col(1).setConstant(0.5 * (lo + hi));
  }
  ctx.x3 = Mat::Ones(n_pts, 1);

  // generator model over the full geometry (all points carry response 1)
  ctx.gen_model.G = build_G(ctx.grid.centers, ctx.regions, ctx.grid, ctx.grid.centers,
                            ctx.k1, ctx.k2, ctx.k3, &ctx.gen_model.layout);
  const int p = 5 + 2 + 1;
  ctx.gen_model.X = Mat::Zero(n_pts + n_reg + n_pts, p);
  ctx.gen_model.X.block(0, 0, n_pts, 5) = ctx.x1_all;
  ctx.gen_model.X.block(n_pts, 5, n_reg, 2) = ctx.x2;
  ctx.gen_model.X.block(n_pts + n_reg, 7, n_pts, 1) = ctx.x3;
  ctx.gen_model.dims = ModelDims{n_pts, n_reg, n_pts, 5, 2, 1, cfg.r};
  ctx.gen_model.H = build_H(ctx.gen_model.X, ctx.gen_model.G);

  if (cfg.discrepancy) {
    // cov(q) = tau^2 LL' + (I - tau^2 LL') = I and cov(W q, G eta) =
    // tau W W'G G' = tau (2I + XX' + GG')^{-1} GG', every factor fixed by
    // the geometry; tau = 1/smax(L) is the largest loading that keeps the
    // complement I - tau^2 LL' positive semidefinite.
    const Mat& W = ctx.gen_model.null_basis_w();
    const Mat L = W.transpose() * ctx.gen_model.G;
    Eigen::SelfAdjointEigenSolver<Mat> es(L * L.transpose());
    if (es.info() != Eigen::Success) throw NumericalError("sim: discrepancy coupling eigensolve failed");
    const double lmax = es.eigenvalues().maxCoeff();
    const double tau = lmax > 0.0 ? 1.0 / std::sqrt(lmax) : 0.0;
    ctx.q_load_eta = tau * L;
    const Vec root = (1.0 - tau * tau * es.eigenvalues().array()).cwiseMax(0.0).sqrt();
    ctx.q_noise_root = es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
  }
  return ctx;
}

// One synthetic dataset.  The latent truth is the smooth process x'beta +
// g'eta minus the injected discrepancy; fine-scale xi enters only if
// sigma_xi_gen > 0 (default off, so the latent surfaces are exactly the
// smooth fields the fitted filtered process targets).  Draw order within the
// replicate substream: eta, [xi1, xi2, xi3 when sigma_xi_gen > 0], the n
// discrepancy innovations eps (discrepancy only), z3 uniforms, then
// observation noise for responses 1 and 2 (response-1 noise drawn at every
// point, used at the realized fires).
inline std::pair<MultiTypeDataset, SimTruth> generate_dataset(const SimContext& ctx, int replicate) {
  const SimConfig& cfg = ctx.config;
  const int n_pts = ctx.grid.size();
  const int n_reg = static_cast<int>(ctx.regions.size());
  RandomStream rng = RandomStream::substream(cfg.seed, stream_purpose::sim_dataset, static_cast<std::uint64_t>(replicate));

  SimTruth truth;
  truth.beta.resize(8);
  truth.beta << cfg.beta1, cfg.beta2, cfg.beta3;
  truth.eta.resize(3 * cfg.r);
  for (int j = 0; j < truth.eta.size(); ++j) truth.eta[j] = rng.normal();
  Vec xi1 = Vec::Zero(n_pts), xi2 = Vec::Zero(n_reg), xi3 = Vec::Zero(n_pts);
  if (cfg.sigma_xi_gen > 0.0) {
    for (int i = 0; i < n_pts; ++i) xi1[i] = cfg.sigma_xi_gen * rng.normal();
    for (int j = 0; j < n_reg; ++j) xi2[j] = cfg.sigma_xi_gen * rng.normal();
    for (int i = 0; i < n_pts; ++i) xi3[i] = cfg.sigma_xi_gen * rng.normal();
  }

  truth.delta1 = Vec::Zero(n_pts);
  truth.delta2 = Vec::Zero(n_reg);
  truth.delta3 = Vec::Zero(n_pts);
  if (cfg.discrepancy) {
    // delta_y = -(Q q)_y through the generator geometry, theta = 1.  q is
    // marginally standard normal but loads on eta (see SimContext), making
    // the injected error dependent with the signal rather than noise
    // orthogonal to it.
    const int n = ctx.gen_model.dims.n();
    Vec eps(n);
    for (int i = 0; i < n; ++i) eps[i] = rng.normal();
    const Vec q = ctx.q_noise_root * eps + ctx.q_load_eta * truth.eta;
    const Vec v = ctx.gen_model.null_basis_w() * q;
    truth.delta1 = -v.segment(0, n_pts);
    truth.delta2 = -v.segment(n_pts, n_reg);
    truth.delta3 = -v.segment(n_pts + n_reg, n_pts);
  }

  const Mat& Gg = ctx.gen_model.G;
  truth.y1 = ctx.x1_all * cfg.beta1 + Gg.topRows(n_pts) * truth.eta + xi1 - truth.delta1;
  truth.y2 = ctx.x2 * cfg.beta2 + Gg.middleRows(n_pts, n_reg) * truth.eta + xi2 - truth.delta2;
  truth.y3 = ctx.x3 * cfg.beta3 + Gg.bottomRows(n_pts) * truth.eta + xi3 - truth.delta3;
  truth.prob3.resize(n_pts);
  for (int i = 0; i < n_pts; ++i) truth.prob3[i] = logistic(truth.y3[i]);

  MultiTypeDataset d;
  d.points = ctx.grid.centers;
  d.grid = ctx.grid;
  d.regions = ctx.regions;
  d.x1 = ctx.x1_all;
  d.x2 = ctx.x2;
  d.x3 = ctx.x3;
  d.z3.resize(n_pts);
  for (int i = 0; i < n_pts; ++i) d.z3[i] = rng.uniform() < truth.prob3[i] ? 1.0 : 0.0;
  for (int i = 0; i < n_pts; ++i)
    if (d.z3[i] == 1.0) d.fire_index.push_back(i);
  Vec eps1(n_pts);
  for (int i = 0; i < n_pts; ++i) eps1[i] = std::sqrt(cfg.sigma2_1) * rng.normal();
  const int m = static_cast<int>(d.fire_index.size());
  d.z1.resize(m);
  d.sigma2_1 = Vec::Constant(m, cfg.sigma2_1);
  for (int i = 0; i < m; ++i) d.z1[i] = truth.y1[d.fire_index[i]] + eps1[d.fire_index[i]];
  d.z2.resize(n_reg);
  d.sigma2_2 = Vec::Constant(n_reg, cfg.sigma2_2);
  for (int j = 0; j < n_reg; ++j) d.z2[j] = truth.y2[j] + std::sqrt(cfg.sigma2_2) * rng.normal();
  d.validate();
  return {std::move(d), std::move(truth)};
}

inline std::pair<MultiTypeDataset, SimTruth> generate_dataset(const SimConfig& cfg, int replicate) {
  return generate_dataset(make_sim_context(cfg), replicate);
}

// ---------------------------------------------------------------------------
// Paired comparison

struct CompareMetrics {
  double mspe_y1 = 0.0, crps_y1 = 0.0;
  double mspe_y2 = 0.0, crps_y2 = 0.0;
  double hd_sum_y3 = 0.0, hd_mean_y3 = 0.0;
  double mse_effects = 0.0;
  double seconds = 0.0;
};

struct ReplicateScores {
  int replicate = 0;
  CompareMetrics epr, mcmc;
};

struct MetricSummary {
  double mean = 0.0, sd = 0.0;
};

struct ComparisonReport {
  SimConfig config;
  std::vector<ReplicateScores> rows;

  static MetricSummary summarize(const std::vector<double>& v) {
    MetricSummary s;
    const int n = static_cast<int>(v.size());
    for (double x : v) s.mean += x;
    s.mean /= n;
    if (n > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - s.mean) * (x - s.mean);
      s.sd = std::sqrt(ss / (n - 1));
    }
    return s;
  }

  MetricSummary summary(const std::string& method, const std::string& metric) const {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& row : rows) {
      const CompareMetrics& m = method == "epr" ? row.epr : row.mcmc;
      double x = 0.0;
      if (metric == "mspe_y1") x = m.mspe_y1;
      else if (metric == "crps_y1") x = m.crps_y1;
      else if (metric == "mspe_y2") x = m.mspe_y2;
      else if (metric == "crps_y2") x = m.crps_y2;
      else if (metric == "hd_sum_y3") x = m.hd_sum_y3;
      else if (metric == "hd_mean_y3") x = m.hd_mean_y3;
      else if (metric == "mse_effects") x = m.mse_effects;
      else if (metric == "seconds") x = m.seconds;
      else throw ConfigError("summary: unknown metric " + metric);
      v.push_back(x);
    }
    return summarize(v);
  }
};

namespace detail {
// Score one fit against the simulated latent process, evaluated at the
// observed support of each response: y1 at the realized fire points, y2 over
// all regions, y3 (via logistic probabilities) at all points.  Predictions
// are the filtered process x'beta + g*'eta.  `be_samples` holds (beta, eta)
// draws one column per sample; `be_mean` is the full-precision posterior
// mean; CRPS and the probability field are computed from every crps_thin-th
// column so that long MCMC runs stay tractable.
inline CompareMetrics score_fit(const Mat& be_samples, const Vec& be_mean, double seconds,
                                const MultiTypeDataset& data, const SimTruth& truth,
                                const PredictionTargets& targets, int crps_thin) {
  CompareMetrics out;
  out.seconds = seconds;
  const int n1s = data.n1s(), n2 = data.n2(), n1 = data.n1();
  const int m = static_cast<int>(be_samples.cols());
  int thin = crps_thin;
  while (thin > 1 && m / thin < 2) thin = std::max(1, thin / 2);
  Mat thinned(be_samples.rows(), (m + thin - 1) / thin);
  for (int j = 0, k = 0; j < m; j += thin, ++k) thinned.col(k) = be_samples.col(j);

  Mat T1f(n1s, targets.T1.cols());
  Vec truth1(n1s);
  for (int i = 0; i < n1s; ++i) {
    T1f.row(i) = targets.T1.row(data.fire_index[i]);
    truth1[i] = truth.y1[data.fire_index[i]];
  }
  out.mspe_y1 = n1s > 0 ? mspe(T1f * be_mean, truth1) : 0.0;
  out.mspe_y2 = mspe(targets.T2 * be_mean, truth.y2);

  const Mat s1 = T1f * thinned;
  const Mat s2 = targets.T2 * thinned;
  std::vector<double> row(static_cast<std::size_t>(thinned.cols()));
  double acc = 0.0;
  for (int i = 0; i < n1s; ++i) {
    for (int j = 0; j < s1.cols(); ++j) row[j] = s1(i, j);
    acc += crps_sample_sorted(row, truth1[i]);
  }
  out.crps_y1 = n1s > 0 ? acc / n1s : 0.0;
  acc = 0.0;
  for (int i = 0; i < n2; ++i) {
    for (int j = 0; j < s2.cols(); ++j) row[j] = s2(i, j);
    acc += crps_sample_sorted(row, truth.y2[i]);
  }
  out.crps_y2 = acc / n2;

  // posterior mean probability field vs the true field
  const Mat s3 = targets.T3 * thinned;
  Vec prob_hat(n1);
  for (int i = 0; i < n1; ++i) {
    double p = 0.0;
    for (int j = 0; j < s3.cols(); ++j) p += logistic(s3(i, j));
    prob_hat[i] = p / s3.cols();
  }
  const HellingerResult hd = hellinger_bernoulli(prob_hat, truth.prob3);
  out.hd_sum_y3 = hd.sum;
  out.hd_mean_y3 = hd.mean;

  Vec eff_truth(truth.beta.size() + truth.eta.size());
  eff_truth << truth.beta, truth.eta;
  out.mse_effects = (be_mean - eff_truth).squaredNorm() / eff_truth.size();
  return out;
}
}  // namespace detail

inline ComparisonReport run_comparison(const SimConfig& cfg) {
  const SimContext ctx = make_sim_context(cfg);
  ComparisonReport report;
  report.config = cfg;
  for (int t = 0; t < cfg.n_replicates; ++t) {
    auto [data, truth] = generate_dataset(ctx, t);
    const ModelMatrices model = assemble_model(data, cfg.fit_hyper, ctx.k1, ctx.k2, ctx.k3);
    const PredictionTargets targets = make_targets(data, model.dims, ctx.k1, ctx.k2, ctx.k3);

    const std::uint64_t epr_seed =
        RandomStream::substream(cfg.seed, stream_purpose::epr_replicate, 1000003ull + t).next_u64();
    const PosteriorReplicates reps = run_epr(model, data, cfg.fit_hyper, cfg.epr_reps, epr_seed, cfg.threads);
    const Mat epr_be = reps.beta_eta_samples();

    McmcConfig mc = cfg.mcmc;
    mc.seed = RandomStream::substream(cfg.seed, stream_purpose::mcmc_chain, 2000003ull + t).next_u64();
    const ChainOutput chains = run_mcmc(model, data, mc);

    ReplicateScores row;
    row.replicate = t;
    row.epr = detail::score_fit(epr_be, epr_be.rowwise().mean(), reps.seconds, data, truth, targets, 1);
    row.mcmc = detail::score_fit(chains.beta_eta_samples(),
                                 chains.posterior_mean().head(model.dims.p() + 3 * model.dims.r),
                                 chains.seconds, data, truth, targets, cfg.crps_thin);
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace epr
