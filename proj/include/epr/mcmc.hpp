#pragma once
// Metropolis-within-Gibbs baseline for the same hierarchical model fit in
// the conventional way: Gaussian responses observed with known variance,
// Bernoulli response through a logit link, Gaussian priors on (beta, eta),
// i.i.d. Gaussian fine-scale terms, inverse-gamma hyperpriors on variances.
//
// Sweep order: beta -> eta -> xi -> variances.  Conditioning on the
// Bernoulli linear predictor nu3 (= x'beta + g'eta + xi3) keeps the beta and
// eta updates exact Gaussian draws -- nu3 acts as pseudo-data with weight
// 1/sigma2_xi.  Each nu3 site moves by scalar random-walk Metropolis with
// one shared, batch-adapted scale (target 0.44, frozen at burn-in); xi1/xi2
// are scalar conjugate Gibbs; variances are conjugate inverse gamma.  The
// fixed Gram pieces of the beta and eta precisions are assembled once, so
// one sweep costs a few n x 3r products and one 3r Cholesky.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "epr/assembly.hpp"
#include "epr/data.hpp"
#include "epr/errors.hpp"
#include "epr/rng.hpp"
#include "epr/special.hpp"

namespace epr {

struct McmcConfig {
  int chains = 2;
  int iters = 10000;    // total per chain, including burn-in
  int burnin = 5000;
  std::uint64_t seed = 1;
  double target_accept = 0.44;
  int adapt_batch = 50;
  // inverse-gamma hyperpriors on the three variances
  double ig_shape = 2.0;
  double ig_rate = 1.0;
  // oracle hook: freeze variances at their init values (no IG updates)
  bool fix_variances = false;
  double init_sigma2_beta = 1.0;
  double init_sigma2_eta = 1.0;
  double init_sigma2_xi = 1.0;
  // stride for stored latent-process draws (post burn-in); the running mean
  // uses every kept iteration regardless
  int latent_thin = 10;

  void validate() const {
    if (chains < 1) throw ConfigError("mcmc: chains must be >= 1");
    if (iters < 2) throw ConfigError("mcmc: iters must be >= 2");
    if (burnin < 0 || burnin >= iters) throw ConfigError("mcmc: burnin must be in [0, iters)");
    if (latent_thin < 1) throw ConfigError("mcmc: latent_thin must be >= 1");
    if (!(target_accept > 0.0 && target_accept < 1.0)) throw ConfigError("mcmc: target_accept outside (0,1)");
    if (adapt_batch < 1) throw ConfigError("mcmc: adapt_batch must be >= 1");
    if (!(ig_shape > 0.0 && ig_rate > 0.0)) throw ConfigError("mcmc: inverse-gamma hyperprior must be positive");
    if (!(init_sigma2_beta > 0.0 && init_sigma2_eta > 0.0 && init_sigma2_xi > 0.0))
      throw ConfigError("mcmc: initial variances must be positive");
  }
};

// Diminishing-adaptation step on the log scale: scale *= exp(+-min(0.01, batch^{-1/2})).
inline double adapt_scale(double acc_rate, double target_rate, double current_scale, int batch) {
  if (batch < 1) throw ConfigError("adapt_scale: batch index must be >= 1");
  const double step = std::min(0.01, 1.0 / std::sqrt(static_cast<double>(batch)));
  if (acc_rate > target_rate) return current_scale * std::exp(step);
  if (acc_rate < target_rate) return current_scale * std::exp(-step);
  return current_scale;
}

struct ChainOutput {
  ModelDims dims;
  std::vector<std::string> param_names;       // beta..., eta..., sigma2_beta, sigma2_eta, sigma2_xi
  std::vector<Mat> chains;                    // per chain: iters x n_params
  int burnin = 0;
  std::uint64_t seed = 0;
  double seconds = 0.0;
  double final_scale = 1.0;                   // adapted RW scale (last chain)
  // latent data-row process y = (x'beta + g'eta + xi over the Gaussian rows,
  // nu3 over the Bernoulli rows): exact kept-iteration mean plus thinned
  // draws, pooled over chains
  Vec latent_mean;
  Mat latent_draws;                           // n rows, one column per stored draw

  int n_params() const { return static_cast<int>(param_names.size()); }
  int n_chains() const { return static_cast<int>(chains.size()); }
  int iters() const { return chains.empty() ? 0 : static_cast<int>(chains[0].rows()); }
  int kept() const { return iters() - burnin; }

  // pooled post-burn-in draws of (beta, eta), one column per sample
  Mat beta_eta_samples() const {
    const int m = dims.p() + 3 * dims.r;
    Mat out(m, static_cast<Eigen::Index>(n_chains()) * kept());
    for (int c = 0; c < n_chains(); ++c)
      out.middleCols(static_cast<Eigen::Index>(c) * kept(), kept()) =
          chains[c].block(burnin, 0, kept(), m).transpose();
    return out;
  }

  Vec posterior_mean() const {
    Vec acc = Vec::Zero(n_params());
    for (const Mat& ch : chains)
      acc += ch.bottomRows(kept()).colwise().mean().transpose();
    return acc / n_chains();
  }
};

struct GelmanRubin {
  double point = 1.0;
  double upper = 1.0;
};

// Potential scale reduction factor with the classical F-based upper bound.
// Identical chains (between-chain variance exactly zero) report (1, 1).
inline GelmanRubin gelman_rubin(const ChainOutput& out, int param) {
  if (param < 0 || param >= out.n_params()) throw ConfigError("gelman_rubin: parameter index out of range");
  const int m = out.n_chains();
  const long n = out.kept();
  if (m < 2) throw ConfigError("gelman_rubin: needs at least two chains");
  if (n < 2) throw ConfigError("gelman_rubin: needs at least two kept iterations");
  Vec means(m), vars(m);
  for (int c = 0; c < m; ++c) {
    const auto col = out.chains[c].col(param).tail(n);
    const double mu = col.mean();
    means[c] = mu;
    vars[c] = (col.array() - mu).square().sum() / static_cast<double>(n - 1);
  }
  const double mu_all = means.mean();
  const double b_over_n = (means.array() - mu_all).square().sum() / static_cast<double>(m - 1);  // B/n
  const double w = vars.mean();
  if (b_over_n == 0.0) return {1.0, 1.0};
  if (!(w > 0.0)) return {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  const double nn = static_cast<double>(n);
  const double point2 = (nn - 1.0) / nn + (1.0 + 1.0 / m) * b_over_n / w;
  // upper bound: replace B/W by its 97.5% quantile, F(m-1, 2W^2/var(W)) law
  const double var_w = (vars.array() - w).square().sum() / static_cast<double>(m - 1) / m;
  double df2 = var_w > 0.0 ? 2.0 * w * w / var_w : 1e9;
  df2 = std::min(df2, 1e9);
  const double fq = f_quantile(0.975, static_cast<double>(m - 1), df2);
  const double upper2 = (nn - 1.0) / nn + (1.0 + 1.0 / m) * b_over_n / w * fq;
  return {std::sqrt(point2), std::sqrt(std::max(point2, upper2))};
}

inline ChainOutput run_mcmc(const ModelMatrices& model, const MultiTypeDataset& data,
                            const McmcConfig& cfg) {
  cfg.validate();
  data.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const ModelDims& d = model.dims;
  const int n1s = d.n1s, n2 = d.n2, n1 = d.n1;
  const int p = d.p(), g = 3 * d.r, m = p + g;

  // design blocks by response rows
  const Mat X1 = model.X.topRows(n1s), X2 = model.X.middleRows(n1s, n2), X3 = model.X.bottomRows(n1);
  const Mat G1 = model.G.topRows(n1s), G2 = model.G.middleRows(n1s, n2), G3 = model.G.bottomRows(n1);

  // fixed Gram pieces of the beta and eta precisions
  const Vec w1 = data.sigma2_1.cwiseInverse();
  const Vec w2 = data.sigma2_2.cwiseInverse();
  Mat Mb12 = Mat::Zero(p, p), Me12 = Mat::Zero(g, g);
  if (n1s > 0) {
    Mb12.noalias() += X1.transpose() * w1.asDiagonal() * X1;
    Me12.noalias() += G1.transpose() * w1.asDiagonal() * G1;
  }
  if (n2 > 0) {
    Mb12.noalias() += X2.transpose() * w2.asDiagonal() * X2;
    Me12.noalias() += G2.transpose() * w2.asDiagonal() * G2;
  }
  Mat Mb3 = Mat::Zero(p, p), Me3 = Mat::Zero(g, g);
  if (n1 > 0) {
    Mb3.noalias() += X3.transpose() * X3;
    Me3.noalias() += G3.transpose() * G3;
  }

  ChainOutput out;
  out.dims = d;
  out.burnin = cfg.burnin;
  out.seed = cfg.seed;
  for (int j = 0; j < p; ++j) out.param_names.push_back("beta_" + std::to_string(j));
  for (int j = 0; j < g; ++j) out.param_names.push_back("eta_" + std::to_string(j));
  out.param_names.push_back("sigma2_beta");
  out.param_names.push_back("sigma2_eta");
  out.param_names.push_back("sigma2_xi");
  const int K = out.n_params();

  const int n = d.n();
  const int kept_per_chain = cfg.iters - cfg.burnin;
  const int stored_per_chain = (kept_per_chain + cfg.latent_thin - 1) / cfg.latent_thin;
  Vec latent_acc = Vec::Zero(n);
  Vec latent(n);
  out.latent_draws.resize(n, static_cast<Eigen::Index>(stored_per_chain) * cfg.chains);
  Eigen::Index latent_col = 0;

  for (int c = 0; c < cfg.chains; ++c) {
    RandomStream rng = RandomStream::substream(cfg.seed, stream_purpose::mcmc_chain, static_cast<std::uint64_t>(c));
    Mat draws(cfg.iters, K);

    Vec beta = Vec::Zero(p), eta = Vec::Zero(g);
    Vec xi1 = Vec::Zero(n1s), xi2 = Vec::Zero(n2), nu3 = Vec::Zero(n1);
    double s2b = cfg.init_sigma2_beta, s2e = cfg.init_sigma2_eta, s2x = cfg.init_sigma2_xi;
    double scale = 1.0;
    long acc = 0, att = 0;
    int batch_index = 0;

    Vec mu1(n1s), mu2(n2), mu3(n1), rhs_b(p), rhs_e(g);
    Mat prec_b(p, p), prec_e(g, g);
    Eigen::LLT<Mat> llt_b, llt_e;

    for (int it = 0; it < cfg.iters; ++it) {
      // --- beta | eta, xi: exact Gaussian conditional, nu3 as pseudo-data ---
      prec_b = Mb12;
      if (n1 > 0) prec_b.noalias() += Mb3 / s2x;
      prec_b.diagonal().array() += 1.0 / s2b;
      rhs_b.setZero();
      if (n1s > 0) rhs_b.noalias() += X1.transpose() * (w1.asDiagonal() * (data.z1 - xi1 - G1 * eta));
      if (n2 > 0) rhs_b.noalias() += X2.transpose() * (w2.asDiagonal() * (data.z2 - xi2 - G2 * eta));
      if (n1 > 0) rhs_b.noalias() += X3.transpose() * (nu3 - G3 * eta) / s2x;
      llt_b.compute(prec_b);
      if (llt_b.info() != Eigen::Success)
        throw NumericalError("mcmc: beta precision not positive definite at iteration " + std::to_string(it));
      Vec zb(p);
      for (int j = 0; j < p; ++j) zb[j] = rng.normal();
      beta = llt_b.solve(rhs_b);
      beta += llt_b.matrixU().solve(zb);

      // --- eta | beta, xi ---
      prec_e = Me12;
      if (n1 > 0) prec_e.noalias() += Me3 / s2x;
      prec_e.diagonal().array() += 1.0 / s2e;
      rhs_e.setZero();
      if (n1s > 0) rhs_e.noalias() += G1.transpose() * (w1.asDiagonal() * (data.z1 - xi1 - X1 * beta));
      if (n2 > 0) rhs_e.noalias() += G2.transpose() * (w2.asDiagonal() * (data.z2 - xi2 - X2 * beta));
      if (n1 > 0) rhs_e.noalias() += G3.transpose() * (nu3 - X3 * beta) / s2x;
      llt_e.compute(prec_e);
      if (llt_e.info() != Eigen::Success)
        throw NumericalError("mcmc: eta precision not positive definite at iteration " + std::to_string(it));
      Vec ze(g);
      for (int j = 0; j < g; ++j) ze[j] = rng.normal();
      eta = llt_e.solve(rhs_e);
      eta += llt_e.matrixU().solve(ze);

      if (n1s > 0) mu1.noalias() = X1 * beta + G1 * eta;
      if (n2 > 0) mu2.noalias() = X2 * beta + G2 * eta;
      if (n1 > 0) mu3.noalias() = X3 * beta + G3 * eta;

      // --- fine-scale Gibbs on the Gaussian rows ---
      for (int i = 0; i < n1s; ++i) {
        const double prec_i = w1[i] + 1.0 / s2x;
        const double mean_i = w1[i] * (data.z1[i] - mu1[i]) / prec_i;
        xi1[i] = mean_i + rng.normal() / std::sqrt(prec_i);
      }
      for (int j = 0; j < n2; ++j) {
        const double prec_j = w2[j] + 1.0 / s2x;
        const double mean_j = w2[j] * (data.z2[j] - mu2[j]) / prec_j;
        xi2[j] = mean_j + rng.normal() / std::sqrt(prec_j);
      }

      // --- Bernoulli linear predictor: scalar random-walk Metropolis ---
      for (int k = 0; k < n1; ++k) {
        const double cur = nu3[k];
        const double prop = cur + scale * rng.normal();
        const double dcur = data.z3[k] * cur - log1pexp(cur) - 0.5 * (cur - mu3[k]) * (cur - mu3[k]) / s2x;
        const double dprop = data.z3[k] * prop - log1pexp(prop) - 0.5 * (prop - mu3[k]) * (prop - mu3[k]) / s2x;
        if (!std::isfinite(dprop) || !std::isfinite(dcur))
          throw NumericalError("mcmc: non-finite log target at iteration " + std::to_string(it) + ", site " + std::to_string(k));
        ++att;
        if (std::log(rng.uniform()) < dprop - dcur) {
          nu3[k] = prop;
          ++acc;
        }
      }
      if (n1 > 0 && it < cfg.burnin && att >= static_cast<long>(cfg.adapt_batch) * n1) {
        ++batch_index;
        scale = adapt_scale(static_cast<double>(acc) / att, cfg.target_accept, scale, batch_index);
        acc = 0;
        att = 0;
      }

      // --- conjugate variance updates ---
      if (!cfg.fix_variances) {
        double ss_xi = xi1.squaredNorm() + xi2.squaredNorm();
        if (n1 > 0) ss_xi += (nu3 - mu3).squaredNorm();
        const double n_xi = static_cast<double>(n1s + n2 + n1);
        s2x = 1.0 / (rng.gamma(cfg.ig_shape + 0.5 * n_xi) / (cfg.ig_rate + 0.5 * ss_xi));
        if (p > 0)
          s2b = 1.0 / (rng.gamma(cfg.ig_shape + 0.5 * p) / (cfg.ig_rate + 0.5 * beta.squaredNorm()));
        if (g > 0)
          s2e = 1.0 / (rng.gamma(cfg.ig_shape + 0.5 * g) / (cfg.ig_rate + 0.5 * eta.squaredNorm()));
      }

      draws.row(it).head(p) = beta.transpose();
      draws.row(it).segment(p, g) = eta.transpose();
      draws(it, m) = s2b;
      draws(it, m + 1) = s2e;
      draws(it, m + 2) = s2x;

      if (it >= cfg.burnin) {
        if (n1s > 0) latent.segment(0, n1s) = mu1 + xi1;
        if (n2 > 0) latent.segment(n1s, n2) = mu2 + xi2;
        if (n1 > 0) latent.segment(n1s + n2, n1) = nu3;
        latent_acc += latent;
        if ((it - cfg.burnin) % cfg.latent_thin == 0) out.latent_draws.col(latent_col++) = latent;
      }
    }
    out.chains.push_back(std::move(draws));
    out.final_scale = scale;
  }
  out.latent_mean = latent_acc / (static_cast<double>(kept_per_chain) * cfg.chains);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace epr
