#pragma once
// Multiscale spatial basis: knot lattice selection, Gaussian radial basis
// evaluation at points, change-of-support averaging over areal regions on a
// fine cell grid, and assembly of the multi-type basis matrix G.
//
// Column layout of G (width 3r, three blocks of width r):
//   block A: eta_1, shared by every response
//   block B: eta_2, point-Gaussian response only
//   block C: eta_3, areal-Gaussian response only
// Row layout: n1* point-Gaussian rows, then n2 areal rows, then n1 Bernoulli
// rows.  The Bernoulli response may use a coarser knot set (r3 <= r); its
// entries occupy the first r3 columns of block A, zero-padded to width r.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "epr/errors.hpp"

namespace epr {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using PointMat = Eigen::Matrix<double, Eigen::Dynamic, 2>;

struct BoundingBox {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
};

struct KnotSet {
  PointMat centers;   // r x 2
  double bandwidth = 1.0;

  int size() const { return static_cast<int>(centers.rows()); }

  void validate() const {
    if (centers.rows() < 1) throw ConfigError("KnotSet: needs at least one knot");
    if (!(bandwidth > 0.0)) throw ConfigError("KnotSet: bandwidth must be > 0");
    if (!centers.allFinite()) throw ConfigError("KnotSet: non-finite center");
  }
};

// Equally spaced interior lattice: smallest k x k grid with k^2 >= r, cell
// midpoints in row-major order, truncated to r.  Bandwidth = 1.5 x the
// minimum knot spacing.
inline KnotSet select_knots(const BoundingBox& box, int r) {
  if (r < 1) throw ConfigError("select_knots: r must be >= 1");
  if (!(box.width() > 0.0 && box.height() > 0.0))
    throw ConfigError("select_knots: degenerate bounding box");
  int k = 1;
  while (k * k < r) ++k;
  KnotSet ks;
  ks.centers.resize(r, 2);
  const double dx = box.width() / k, dy = box.height() / k;
  int idx = 0;
  for (int iy = 0; iy < k && idx < r; ++iy)
    for (int ix = 0; ix < k && idx < r; ++ix, ++idx) {
      ks.centers(idx, 0) = box.x0 + (ix + 0.5) * dx;
      ks.centers(idx, 1) = box.y0 + (iy + 0.5) * dy;
    }
  ks.bandwidth = 1.5 * std::min(dx, dy);
  return ks;
}

// Gaussian RBF vector g(s): g_j = exp(-||s - c_j||^2 / (2 b^2)).
inline Vec eval_rbf(double x, double y, const KnotSet& ks) {
  ks.validate();
  if (!std::isfinite(x) || !std::isfinite(y)) throw DataError("eval_rbf: non-finite point");
  const double inv2b2 = 0.5 / (ks.bandwidth * ks.bandwidth);
  Vec g(ks.size());
  for (int j = 0; j < ks.size(); ++j) {
    const double ex = x - ks.centers(j, 0);
    const double ey = y - ks.centers(j, 1);
    g[j] = std::exp(-(ex * ex + ey * ey) * inv2b2);
  }
  return g;
}

// Fine grid carrying the change-of-support quadrature nodes (cell centers).
struct CellGrid {
  PointMat centers;       // one row per cell
  double cell_area = 0.0;

  int size() const { return static_cast<int>(centers.rows()); }
};

struct ArealRegion {
  std::string id;
  std::vector<int> cells;  // indices into the fine grid

  double area(const CellGrid& grid) const { return grid.cell_area * static_cast<double>(cells.size()); }
};

// Midpoint-rule average of the basis over a region: since cells share one
// area, the integral average reduces to the mean over member cell centers.
// First order in cell area against the exact integral.
inline Vec cos_average(const ArealRegion& region, const KnotSet& ks, const CellGrid& grid) {
  if (region.cells.empty()) throw DataError("cos_average: region '" + region.id + "' has no cells");
  Vec acc = Vec::Zero(ks.size());
  for (int c : region.cells) {
    if (c < 0 || c >= grid.size())
      throw DataError("cos_average: region '" + region.id + "' references cell " + std::to_string(c) + " outside the grid");
    acc += eval_rbf(grid.centers(c, 0), grid.centers(c, 1), ks);
  }
  return acc / static_cast<double>(region.cells.size());
}

struct BasisBlockLayout {
  int n1s = 0, n2 = 0, n1 = 0;  // row-block heights
  int r = 0;                    // column-block width (blocks A, B, C)
  int r3 = 0;                   // active columns of block A on Bernoulli rows

  int rows() const { return n1s + n2 + n1; }
  int cols() const { return 3 * r; }

  int response_of_row(int row) const {
    if (row < n1s) return 1;
    if (row < n1s + n2) return 2;
    return 3;
  }

  bool is_structural_zero(int row, int col) const {
    const int m = response_of_row(row);
    const int block = col / r;      // 0 = A, 1 = B, 2 = C
    const int within = col % r;
    switch (m) {
      case 1: return block == 2;
      case 2: return block == 1;
      default: return block != 0 || within >= r3;
    }
  }
};

// Basis matrix over all three supports.  k1/k2 must share the knot count r
// (they populate the same shared column block); k3 may be coarser.
inline Mat build_G(const PointMat& pts1, const std::vector<ArealRegion>& regions, const CellGrid& grid,
                   const PointMat& pts3, const KnotSet& k1, const KnotSet& k2, const KnotSet& k3,
                   BasisBlockLayout* layout_out = nullptr) {
  k1.validate();
  k2.validate();
  k3.validate();
  const int r = k1.size();
  if (k2.size() != r)
    throw ConfigError("build_G: point and areal knot sets must have equal size (shared column block)");
  if (k3.size() > r)
    throw ConfigError("build_G: Bernoulli knot set may not exceed the shared size");
  BasisBlockLayout layout;
  layout.n1s = static_cast<int>(pts1.rows());
  layout.n2 = static_cast<int>(regions.size());
  layout.n1 = static_cast<int>(pts3.rows());
  layout.r = r;
  layout.r3 = k3.size();
  Mat G = Mat::Zero(layout.rows(), layout.cols());
  for (int i = 0; i < layout.n1s; ++i) {
    const Vec g = eval_rbf(pts1(i, 0), pts1(i, 1), k1);
    G.row(i).segment(0, r) = g.transpose();
    G.row(i).segment(r, r) = g.transpose();
  }
  for (int j = 0; j < layout.n2; ++j) {
    const Vec g = cos_average(regions[j], k2, grid);
    G.row(layout.n1s + j).segment(0, r) = g.transpose();
    G.row(layout.n1s + j).segment(2 * r, r) = g.transpose();
  }
  for (int kk = 0; kk < layout.n1; ++kk) {
    const Vec g = eval_rbf(pts3(kk, 0), pts3(kk, 1), k3);
    G.row(layout.n1s + layout.n2 + kk).segment(0, k3.size()) = g.transpose();
  }
  if (layout_out) *layout_out = layout;
  return G;
}

// Filtered-process basis rows for prediction targets (same column layout).
inline Vec g_star_point1(double x, double y, const KnotSet& k1, int r) {
  Vec out = Vec::Zero(3 * r);
  const Vec g = eval_rbf(x, y, k1);
  out.segment(0, r) = g;
  out.segment(r, r) = g;
  return out;
}

inline Vec g_star_region(const ArealRegion& region, const KnotSet& k2, const CellGrid& grid, int r) {
  Vec out = Vec::Zero(3 * r);
  const Vec g = cos_average(region, k2, grid);
  out.segment(0, r) = g;
  out.segment(2 * r, r) = g;
  return out;
}

inline Vec g_star_point3(double x, double y, const KnotSet& k3, int r) {
  Vec out = Vec::Zero(3 * r);
  out.segment(0, k3.size()) = eval_rbf(x, y, k3);
  return out;
}

}  // namespace epr
