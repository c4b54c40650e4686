// Augmented-design assembly: H stacking, the closed-form orthogonal
// complement vs a dense QR oracle, natural-parameter (alpha, kappa) rows, and
// the diagonal theta-scaling.  Projector identities use the full dense
// matrices as reference.
#include <catch2/catch_amalgamated.hpp>
#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "epr/assembly.hpp"
#include "epr/data.hpp"
#include "epr/errors.hpp"

using epr::Mat;
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

// 16 points on a 4x4 grid, fires at a fixed subset, 3 regions.
epr::MultiTypeDataset make_toy_dataset() {
  epr::MultiTypeDataset d;
  d.grid = make_unit_grid(4);
  d.points = d.grid.centers;
  const int n = 16;
  d.z3 = Vec::Zero(n);
  for (int i : {1, 6, 7, 12}) d.z3[i] = 1.0;
  d.fire_index = {1, 6, 7, 12};
  d.z1 = (Vec(4) << 1.4, -0.3, 2.2, 0.9).finished();
  d.sigma2_1 = (Vec(4) << 0.5, 1.0, 2.0, 1.0).finished();
  d.x1.resize(n, 2);
  d.x3.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    d.x1(i, 0) = 1.0;
    d.x1(i, 1) = d.points(i, 0) - d.points(i, 1);
    d.x3(i, 0) = 1.0;
  }
  d.regions = {{"r0", {0, 1, 2, 3, 4, 5}}, {"r1", {6, 7, 8, 9, 10}}, {"r2", {11, 12, 13, 14, 15}}};
  d.z2 = (Vec(3) << 0.2, -1.1, 0.7).finished();
  d.sigma2_2 = (Vec(3) << 1.0, 1.0, 4.0).finished();
  d.x2 = Mat::Ones(3, 1);
  return d;
}

}  // namespace

TEST_CASE("H stacks data rows over identity prior rows") {
  Mat X(1, 1), G(1, 1);
  X << 2.0;
  G << 3.0;
  const Mat H = epr::build_H(X, G);
  Mat expect(4, 3);
  expect << 1, 2, 3,
            0, 1, 0,
            0, 0, 1,
            1, 0, 0;
  CHECK((H - expect).cwiseAbs().maxCoeff() == 0.0);

  Mat G2(2, 1);
  G2 << 1.0, 2.0;
  CHECK_THROWS_AS(epr::build_H(X, G2), epr::ConfigError);
}

TEST_CASE("QR null basis: hand-checkable cases and exact invariants") {
  Mat H1(2, 1);
  H1 << 1.0, 0.0;
  const Mat Q1 = epr::build_Q(H1);
  REQUIRE(Q1.cols() == 1);
  CHECK(std::fabs(Q1(0, 0)) < 1e-15);
  CHECK(Q1(1, 0) == Catch::Approx(1.0).epsilon(1e-14));

  Mat H2(2, 1);
  H2 << 1.0, 1.0;
  const Mat Q2 = epr::build_Q(H2);
  const double s = 1.0 / std::sqrt(2.0);
  CHECK(Q2(0, 0) == Catch::Approx(s).epsilon(1e-13));   // sign convention: leading entry positive
  CHECK(Q2(1, 0) == Catch::Approx(-s).epsilon(1e-13));

  // random full-column-rank H
  Mat H(10, 3);
  unsigned state = 17;
  auto lcg = [&state] {
    state = state * 1664525u + 1013904223u;
    return static_cast<double>(state) / 4294967296.0 - 0.5;
  };
  for (int i = 0; i < H.rows(); ++i)
    for (int j = 0; j < H.cols(); ++j) H(i, j) = lcg();
  const Mat Q = epr::build_Q(H);
  REQUIRE(Q.cols() == 7);
  CHECK((H.transpose() * Q).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((Q.transpose() * Q - Mat::Identity(7, 7)).cwiseAbs().maxCoeff() < 1e-12);

  Mat Hdef(4, 2);
  Hdef << 1, 2, 2, 4, 3, 6, 4, 8;  // rank 1
  CHECK_THROWS_AS(epr::build_Q(Hdef), epr::NumericalError);
  CHECK_THROWS_AS(epr::build_Q(Mat::Identity(3, 3)), epr::ConfigError);
}

TEST_CASE("natural-parameter rows follow the conjugate update recipe") {
  auto d = make_toy_dataset();
  epr::HyperState hyper = epr::HyperState::point_mass(1.0, 1.0, 1.0, 0.5);
  const auto vs = epr::build_alpha_kappa(d, hyper);
  REQUIRE(vs.size() == 4 + 3 + 16);

  // point-Gaussian rows: (z / s2, 1 / (2 s2))
  CHECK(vs.specs[0].alpha == Catch::Approx(1.4 / 0.5));
  CHECK(vs.specs[0].kappa == Catch::Approx(1.0));
  CHECK(vs.specs[0].tag == epr::PartitionTag::gaussian);
  // areal rows continue after the n1* block
  CHECK(vs.specs[4].alpha == Catch::Approx(0.2));
  CHECK(vs.specs[4].kappa == Catch::Approx(0.5));
  CHECK(vs.specs[6].alpha == Catch::Approx(0.7 / 4.0));
  CHECK(vs.specs[6].kappa == Catch::Approx(0.125));
  // Bernoulli rows: (z3 + alpha_xi, 1 + 2 alpha_xi)
  CHECK(vs.specs[7].alpha == Catch::Approx(0.5));   // z3 = 0 at point 0
  CHECK(vs.specs[7].kappa == Catch::Approx(2.0));
  CHECK(vs.specs[8].alpha == Catch::Approx(1.5));   // z3 = 1 at point 1
  CHECK(vs.specs[8].kappa == Catch::Approx(2.0));
  CHECK(vs.specs[8].tag == epr::PartitionTag::bernoulli);

  auto vs2 = vs;
  epr::append_prior_rows(vs2, 5);
  REQUIRE(vs2.size() == vs.size() + 5);
  CHECK(vs2.specs.back().alpha == 0.0);
  CHECK(vs2.specs.back().kappa == 0.5);
  CHECK(vs2.specs.back().tag == epr::PartitionTag::gaussian);

  hyper.alpha_xi = 0.0;
  CHECK_THROWS_AS(epr::build_alpha_kappa(d, hyper), epr::ConfigError);
}

TEST_CASE("diagonal scaling D(theta) has the four-block pattern") {
  epr::ModelDims dims{1, 1, 2, 2, 1, 0, 1};  // n = 4, p = 3, 3r = 3
  CHECK(dims.n() == 4);
  CHECK(dims.p() == 3);
  CHECK(dims.zeta_dim() == 10);
  CHECK(dims.w_dim() == 14);

  const epr::ThetaDraw theta{2.0, 3.0, 0.5};
  const auto D = epr::build_D(theta, dims);
  const Vec dd = D.diagonal();
  REQUIRE(dd.size() == 14);
  for (int i = 0; i < 4; ++i) CHECK(dd[i] == 1.0);
  for (int i = 4; i < 7; ++i) CHECK(dd[i] == 2.0);
  for (int i = 7; i < 10; ++i) CHECK(dd[i] == 3.0);
  for (int i = 10; i < 14; ++i) CHECK(dd[i] == 0.5);

  const Vec w = Vec::LinSpaced(14, -1.0, 1.5);
  CHECK((D.apply_inverse(D.apply(w)) - w).cwiseAbs().maxCoeff() < 1e-15);
  Mat W = Mat::Random(14, 3);
  Mat Wref = dd.asDiagonal() * W;
  D.scale_rows(W);
  CHECK((W - Wref).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(epr::build_D(epr::ThetaDraw{0.0, 1.0, 1.0}, dims), epr::ConfigError);
  CHECK_THROWS_AS(epr::build_D(epr::ThetaDraw{1.0, 1.0, -2.0}, dims), epr::ConfigError);
}

TEST_CASE("assembled model: orthogonal complement identities") {
  auto d = make_toy_dataset();
  const epr::BoundingBox box{0, 0, 1, 1};
  const auto k1 = epr::select_knots(box, 4);
  const auto k3 = epr::select_knots(box, 2);
  const auto model = epr::assemble_model(d, epr::HyperState::point_mass(1, 1, 1), k1, k1, k3);

  CHECK(model.dims.n1s == 4);
  CHECK(model.dims.n2 == 3);
  CHECK(model.dims.n1 == 16);
  CHECK(model.dims.p() == 4);
  CHECK(model.dims.r == 4);
  const int n = model.dims.n(), wd = model.dims.w_dim();
  REQUIRE(model.H.rows() == wd);
  REQUIRE(model.w_spec.size() == wd);

  // X is block diagonal with the fire-row slice of x1 in the top-left
  CHECK((model.X.block(0, 0, 4, 2) - d.x1_fire()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(model.X.block(0, 2, 4, 2).cwiseAbs().maxCoeff() == 0.0);

  const Mat& Q = model.Q();
  REQUIRE(Q.cols() == n);
  CHECK((model.H.transpose() * Q).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((Q.transpose() * Q - Mat::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-12);

  // projector equality against the dense QR construction
  const Mat Qqr = epr::build_Q(model.H);
  CHECK((Q * Q.transpose() - Qqr * Qqr.transpose()).cwiseAbs().maxCoeff() < 1e-8);
  const Mat HtH = model.H.transpose() * model.H;
  const Mat P = model.H * HtH.ldlt().solve(model.H.transpose());
  CHECK((Q * Q.transpose() - (Mat::Identity(wd, wd) - P)).cwiseAbs().maxCoeff() < 1e-8);

  // apply_Nt agrees with explicit N = [I; -X'; -G'; -I]
  Mat N(wd, n);
  N.topRows(n).setIdentity();
  N.middleRows(n, model.dims.p()) = -model.X.transpose();
  N.middleRows(n + model.dims.p(), 3 * model.dims.r) = -model.G.transpose();
  N.bottomRows(n) = -Mat::Identity(n, n);
  const Mat U = Mat::Random(wd, 5);
  CHECK((model.apply_Nt(U) - N.transpose() * U).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((model.H.transpose() * N).cwiseAbs().maxCoeff() == 0.0);  // exact by construction

  const double rc = model.null_gram_rcond();
  CHECK(rc > 0.0);
  CHECK(rc <= 1.0);

  // w_spec ordering: data rows first (alpha of row 0 is z1[0]/s2), priors after
  CHECK(model.w_spec.specs[0].alpha == Catch::Approx(1.4 / 0.5));
  CHECK(model.w_spec.specs[n].alpha == 0.0);
  CHECK(model.w_spec.specs[n].kappa == 0.5);
}
