// MCMC baseline.  Oracles: prior recovery under near-zero data weight, the
// dense conjugate closed form for the all-Gaussian sub-model, and a single
// Bernoulli site whose (beta, eta) posterior moments follow from 1-D
// quadrature over the latent linear predictor.
#include <catch2/catch_amalgamated.hpp>
#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "epr/assembly.hpp"
#include "epr/data.hpp"
#include "epr/errors.hpp"
#include "epr/mcmc.hpp"
#include "epr/rng.hpp"
#include "epr/special.hpp"

using epr::Mat;
using epr::McmcConfig;
using epr::Vec;

namespace {

epr::CellGrid make_unit_grid(int k) {
  epr::CellGrid g;
  g.centers.resize(k * k, 2);
  const double h = 1.0 / k;
  int idx = 0;
  for (int iy = 0; iy < k; ++iy)
    for (int ix = 0; ix < k; ++ix, ++idx) {
      g.centers(idx, 0) = (ix + 0.5) * h;
      g.centers(idx, 1) = (iy + 0.5) * h;
    }
  g.cell_area = h * h;
  return g;
}

epr::MultiTypeDataset make_areal_dataset(double s2_scale) {
  epr::MultiTypeDataset d;
  d.grid = make_unit_grid(3);
  d.points.resize(0, 2);
  d.z3.resize(0);
  d.x1.resize(0, 0);
  d.x3.resize(0, 0);
  d.regions = {{"a", {0, 1, 3, 4}}, {"b", {2, 5, 8}}, {"c", {6, 7}}};
  d.z2 = (Vec(3) << 1.0, -0.5, 0.25).finished();
  d.sigma2_2 = s2_scale * (Vec(3) << 0.5, 1.0, 2.0).finished();
  d.x2 = Mat::Ones(3, 1);
  return d;
}

epr::ModelMatrices model_for(const epr::MultiTypeDataset& d, int r, int r3) {
  const epr::BoundingBox box{0, 0, 1, 1};
  return epr::assemble_model(d, epr::HyperState::point_mass(1, 1, 1),
                             epr::select_knots(box, r), epr::select_knots(box, r), epr::select_knots(box, r3));
}

}  // namespace

TEST_CASE("adapt_scale moves the proposal on the diminishing log schedule") {
  CHECK(epr::adapt_scale(0.6, 0.44, 1.0, 1) == Catch::Approx(std::exp(0.01)));
  CHECK(epr::adapt_scale(0.2, 0.44, 1.0, 1) == Catch::Approx(std::exp(-0.01)));
  CHECK(epr::adapt_scale(0.44, 0.44, 2.5, 3) == 2.5);
  // large batch index shrinks the step below the 0.01 cap
  CHECK(epr::adapt_scale(0.6, 0.44, 1.0, 40000) == Catch::Approx(std::exp(1.0 / 200.0)));
  CHECK_THROWS_AS(epr::adapt_scale(0.5, 0.44, 1.0, 0), epr::ConfigError);
}

TEST_CASE("adapted random walk on a standard normal settles near the target rate") {
  // independent simulation using only adapt_scale from the library
  epr::RandomStream rng = epr::RandomStream::substream(3, epr::stream_purpose::test, 70);
  double x = 0.0, scale = 8.0;  // deliberately bad start
  int acc = 0, att = 0, batch = 0;
  auto step = [&](bool adapt) {
    const double prop = x + scale * rng.normal();
    ++att;
    if (std::log(rng.uniform()) < 0.5 * (x * x - prop * prop)) {
      x = prop;
      ++acc;
    }
    if (adapt && att >= 50) {
      scale = epr::adapt_scale(static_cast<double>(acc) / att, 0.44, scale, ++batch);
      acc = 0;
      att = 0;
    }
  };
  for (int i = 0; i < 20000; ++i) step(true);
  acc = 0;
  att = 0;
  for (int i = 0; i < 20000; ++i) step(false);  // frozen scale
  const double rate = static_cast<double>(acc) / att;
  CHECK(rate > 0.35);
  CHECK(rate < 0.55);
}

TEST_CASE("gelman-rubin: identical chains give exactly one, separated chains diverge") {
  epr::ChainOutput out;
  out.dims = epr::ModelDims{0, 3, 0, 0, 1, 0, 1};
  out.param_names = {"a", "b"};
  out.burnin = 2;
  Mat c1(10, 2);
  for (int i = 0; i < 10; ++i) {
    c1(i, 0) = 0.1 * i;
    c1(i, 1) = std::sin(i);
  }
  out.chains = {c1, c1};
  const auto gr = epr::gelman_rubin(out, 0);
  CHECK(gr.point == 1.0);
  CHECK(gr.upper == 1.0);

  // same within-chain wiggle, far-apart levels -> PSRF >> 1
  Mat c2 = c1;
  c2.col(0).array() += 50.0;
  out.chains = {c1, c2};
  const auto gr2 = epr::gelman_rubin(out, 0);
  CHECK(gr2.point > 10.0);
  CHECK(gr2.upper >= gr2.point);

  // two well-mixed iid chains stay near 1
  epr::RandomStream rng = epr::RandomStream::substream(3, epr::stream_purpose::test, 71);
  Mat d1(4000, 2), d2(4000, 2);
  for (int i = 0; i < 4000; ++i)
    for (int j = 0; j < 2; ++j) {
      d1(i, j) = rng.normal();
      d2(i, j) = rng.normal();
    }
  out.chains = {d1, d2};
  out.burnin = 1000;
  const auto gr3 = epr::gelman_rubin(out, 1);
  CHECK(gr3.point < 1.05);
  CHECK(gr3.upper >= gr3.point);

  CHECK_THROWS_AS(epr::gelman_rubin(out, 5), epr::ConfigError);
  out.chains = {d1};
  CHECK_THROWS_AS(epr::gelman_rubin(out, 0), epr::ConfigError);
}

TEST_CASE("chain bookkeeping: pooled samples and posterior mean use kept rows only") {
  epr::ChainOutput out;
  out.dims = epr::ModelDims{0, 1, 0, 0, 1, 0, 1};  // p + 3r = 4
  out.param_names = {"b0", "e0", "e1", "e2", "s2b", "s2e", "s2x"};
  out.burnin = 3;
  Mat ch = Mat::Zero(5, 7);
  ch.topRows(3).setConstant(-100.0);  // burn-in garbage
  ch.row(3) << 1, 2, 3, 4, 5, 6, 7;
  ch.row(4) << 3, 4, 5, 6, 7, 8, 9;
  Mat ch2 = ch;
  ch2.row(3).array() += 10.0;
  ch2.row(4).array() += 10.0;
  out.chains = {ch, ch2};

  CHECK(out.kept() == 2);
  const Mat be = out.beta_eta_samples();
  REQUIRE(be.rows() == 4);
  REQUIRE(be.cols() == 4);
  CHECK(be(0, 0) == 1.0);
  CHECK(be(0, 1) == 3.0);
  CHECK(be(3, 2) == 14.0);
  const Vec pm = out.posterior_mean();
  CHECK(pm[0] == Catch::Approx(7.0));   // mean of 1,3,11,13
  CHECK(pm[6] == Catch::Approx(13.0));  // mean of 7,9,17,19
}

TEST_CASE("config validation rejects malformed settings") {
  McmcConfig cfg;
  cfg.burnin = cfg.iters;
  CHECK_THROWS_AS(cfg.validate(), epr::ConfigError);
  cfg = McmcConfig{};
  cfg.chains = 0;
  CHECK_THROWS_AS(cfg.validate(), epr::ConfigError);
  cfg = McmcConfig{};
  cfg.init_sigma2_xi = 0.0;
  CHECK_THROWS_AS(cfg.validate(), epr::ConfigError);
  cfg = McmcConfig{};
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("near-zero data weight recovers the prior") {
  const auto d = make_areal_dataset(1e8);  // observation variance ~1e8: likelihood flat
  const auto model = model_for(d, 4, 2);
  McmcConfig cfg;
  cfg.chains = 2;
  cfg.iters = 4000;
  cfg.burnin = 1000;
  cfg.seed = 11;
  cfg.fix_variances = true;
  const auto out = epr::run_mcmc(model, d, cfg);

  const Mat be = out.beta_eta_samples();  // 13 x 6000, should look like N(0, 1)
  for (int j : {0, 1, 7, 12}) {
    const double mean = be.row(j).mean();
    const double sd = std::sqrt((be.row(j).array() - mean).square().mean());
    CHECK(std::fabs(mean) < 0.07);
    CHECK(sd == Catch::Approx(1.0).epsilon(0.07));
  }
  // frozen variances are carried through verbatim
  CHECK((out.chains[0].col(13).array() - 1.0).abs().maxCoeff() == 0.0);
  CHECK((out.chains[1].col(15).array() - 1.0).abs().maxCoeff() == 0.0);
}

TEST_CASE("all-Gaussian sub-model matches the dense conjugate closed form") {
  const auto d = make_areal_dataset(1.0);
  const auto model = model_for(d, 4, 2);
  McmcConfig cfg;
  cfg.chains = 2;
  cfg.iters = 12000;
  cfg.burnin = 2000;
  cfg.seed = 5;
  cfg.fix_variances = true;
  cfg.init_sigma2_beta = 2.0;
  cfg.init_sigma2_eta = 1.0;
  cfg.init_sigma2_xi = 0.5;
  const auto out = epr::run_mcmc(model, d, cfg);

  // marginalizing the fine-scale term: z2 | b ~ N(A2 b, sigma2_2 + s2x)
  const int m = model.dims.p() + 3 * model.dims.r;
  Mat A2(d.n2(), m);
  A2.leftCols(model.dims.p()) = model.X;
  A2.rightCols(3 * model.dims.r) = model.G;
  const Vec w = (d.sigma2_2.array() + 0.5).inverse();
  Mat P = A2.transpose() * w.asDiagonal() * A2;
  P.diagonal().head(model.dims.p()).array() += 1.0 / 2.0;
  P.diagonal().tail(3 * model.dims.r).array() += 1.0;
  const Mat cov_cf = P.inverse();
  const Vec mean_cf = cov_cf * (A2.transpose() * (w.asDiagonal() * d.z2));

  const Mat be = out.beta_eta_samples();
  const int kept = static_cast<int>(be.cols());
  for (int j = 0; j < m; ++j) {
    const double mean = be.row(j).mean();
    const double sd_cf = std::sqrt(cov_cf(j, j));
    // Gibbs autocorrelation: allow an effective sample size of kept/20
    CHECK(std::fabs(mean - mean_cf[j]) < 6.0 * sd_cf / std::sqrt(kept / 20.0));
    const double sd = std::sqrt((be.row(j).array() - mean).square().mean());
    CHECK(sd == Catch::Approx(sd_cf).epsilon(0.10));
  }
}

TEST_CASE("single Bernoulli site matches the 1-D quadrature oracle") {
  // one point, z3 = 0, no Gaussian data; the latent nu has the exact marginal
  // p(nu) ~ exp(z nu - log(1+e^nu)) N(nu; 0, v),  v = s2x + a' P0 a
  epr::MultiTypeDataset d;
  d.grid = make_unit_grid(2);
  d.points.resize(1, 2);
  d.points << 0.4, 0.6;
  d.z3 = Vec::Zero(1);
  d.x1.resize(1, 0);
  d.x3 = Mat::Ones(1, 1);
  d.z1.resize(0);
  d.sigma2_1.resize(0);
  d.z2.resize(0);
  d.sigma2_2.resize(0);
  d.x2.resize(0, 0);
  const auto model = model_for(d, 2, 1);
  const int m = model.dims.p() + 3 * model.dims.r;  // 1 + 6
  REQUIRE(m == 7);

  const double s2b = 1.0, s2e = 1.0, s2x = 1.0;
  Vec a(m);
  a[0] = d.x3(0, 0);
  a.tail(6) = model.G.row(0).transpose();
  Vec p0 = Vec::Ones(m);
  p0[0] = s2b;
  p0.tail(6).setConstant(s2e);
  const double v = s2x + (a.array().square() * p0.array()).sum();

  // quadrature for E[nu], Var(nu)
  const int K = 40001;
  double z0 = 0.0, z1 = 0.0, z2 = 0.0;
  for (int i = 0; i < K; ++i) {
    const double nu = -14.0 + 22.0 * i / (K - 1.0);
    const double lp = -epr::log1pexp(nu) - 0.5 * nu * nu / v;
    const double f = std::exp(lp);
    z0 += f;
    z1 += f * nu;
    z2 += f * nu * nu;
  }
  const double e_nu = z1 / z0;
  const double v_nu = z2 / z0 - e_nu * e_nu;

  // b | nu is Gaussian: precision P = a a'/s2x + P0^{-1}, mean P^{-1} a nu/s2x
  Mat P = a * a.transpose() / s2x;
  P.diagonal() += p0.cwiseInverse();
  const Mat Pinv = P.inverse();
  const Vec gain = Pinv * a / s2x;
  const Vec mean_cf = gain * e_nu;
  const Mat cov_cf = Pinv + gain * v_nu * gain.transpose();

  McmcConfig cfg;
  cfg.chains = 2;
  cfg.iters = 30000;
  cfg.burnin = 5000;
  cfg.seed = 1234;
  cfg.fix_variances = true;
  const auto out = epr::run_mcmc(model, d, cfg);
  const Mat be = out.beta_eta_samples();
  const int kept = static_cast<int>(be.cols());
  for (int j = 0; j < m; ++j) {
    const double mean = be.row(j).mean();
    const double sd_cf = std::sqrt(cov_cf(j, j));
    CHECK(std::fabs(mean - mean_cf[j]) < 6.0 * sd_cf / std::sqrt(kept / 40.0));
    const double sd = std::sqrt((be.row(j).array() - mean).square().mean());
    CHECK(sd == Catch::Approx(sd_cf).epsilon(0.12));
  }
  CHECK(out.final_scale > 0.0);
  CHECK(std::isfinite(out.final_scale));
}

TEST_CASE("runs are deterministic in the seed") {
  const auto d = make_areal_dataset(1.0);
  const auto model = model_for(d, 4, 2);
  McmcConfig cfg;
  cfg.chains = 2;
  cfg.iters = 400;
  cfg.burnin = 100;
  cfg.seed = 77;
  const auto a = epr::run_mcmc(model, d, cfg);
  const auto b = epr::run_mcmc(model, d, cfg);
  REQUIRE(a.n_chains() == 2);
  CHECK(a.chains[0] == b.chains[0]);
  CHECK(a.chains[1] == b.chains[1]);
  CHECK(a.chains[0] != a.chains[1]);  // distinct chain substreams
  cfg.seed = 78;
  const auto c = epr::run_mcmc(model, d, cfg);
  CHECK(a.chains[0] != c.chains[0]);
}
