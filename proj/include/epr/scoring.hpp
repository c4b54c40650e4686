#pragma once
// Scoring and diagnostic primitives: MSPE, sample-based CRPS (exact quadratic
// form and a sorted O(m log m) shortcut), interval score, Hellinger distance
// for Bernoulli fields, rank-based ROC/AUC with tie handling, and ECDF
// quantiles (inverted ECDF, no interpolation).

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "epr/errors.hpp"

namespace epr {

// Inverted-ECDF quantile: k = ceil(p*m), 1-indexed order statistic.
inline double ecdf_quantile(std::vector<double> x, double p) {
  if (x.empty()) throw DataError("ecdf_quantile: empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("ecdf_quantile: p outside [0,1]");
  std::sort(x.begin(), x.end());
  const int m = static_cast<int>(x.size());
  int k = static_cast<int>(std::ceil(p * m));
  k = std::max(1, std::min(m, k));
  return x[k - 1];
}

inline double mspe(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
  if (pred.size() != truth.size() || pred.size() == 0)
    throw DataError("mspe: size mismatch or empty");
  return (pred - truth).squaredNorm() / static_cast<double>(pred.size());
}

// CRPS from a predictive sample {x_i} against observation z:
//   mean |x_i - z| - (1/2m^2) sum_ij |x_i - x_j|
inline double crps_sample(const Eigen::VectorXd& x, double z) {
  const int m = static_cast<int>(x.size());
  if (m == 0) throw DataError("crps_sample: empty sample");
  double t1 = 0.0;
  for (int i = 0; i < m; ++i) t1 += std::fabs(x[i] - z);
  t1 /= m;
  double t2 = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) t2 += std::fabs(x[i] - x[j]);
  return t1 - 0.5 * t2 / (static_cast<double>(m) * m);
}

// Same estimator via order statistics: sum_ij |x_i - x_j| = 2 sum_k (2k-1-m) x_(k).
inline double crps_sample_sorted(std::vector<double> x, double z) {
  const int m = static_cast<int>(x.size());
  if (m == 0) throw DataError("crps_sample_sorted: empty sample");
  std::sort(x.begin(), x.end());
  double t1 = 0.0, t2 = 0.0;
  for (int k = 1; k <= m; ++k) {
    t1 += std::fabs(x[k - 1] - z);
    t2 += (2.0 * k - 1.0 - m) * x[k - 1];
  }
  return t1 / m - t2 / (static_cast<double>(m) * m);
}

// Interval score at level alpha for central interval [l, u]:
//   (u - l) + (2/alpha)(l - z) 1{z < l} + (2/alpha)(z - u) 1{z > u}
inline double interval_score(double l, double u, double z, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("interval_score: alpha outside (0,1)");
  if (!(u >= l)) throw DataError("interval_score: upper < lower");
  double s = u - l;
  if (z < l) s += 2.0 / alpha * (l - z);
  if (z > u) s += 2.0 / alpha * (z - u);
  return s;
}

// Hellinger distance between Bernoulli(p) and Bernoulli(q).
inline double hellinger_point(double p, double q) {
  if (!(p >= 0.0 && p <= 1.0 && q >= 0.0 && q <= 1.0))
    throw DataError("hellinger_point: probabilities outside [0,1]");
  const double bc = std::sqrt(p * q) + std::sqrt((1.0 - p) * (1.0 - q));
  return std::sqrt(std::max(0.0, 1.0 - bc));
}

struct HellingerResult {
  double sum = 0.0;   // headline aggregate over locations
  double mean = 0.0;
};

inline HellingerResult hellinger_bernoulli(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size() || p.size() == 0)
    throw DataError("hellinger_bernoulli: size mismatch or empty");
  HellingerResult res;
  for (int i = 0; i < p.size(); ++i) res.sum += hellinger_point(p[i], q[i]);
  res.mean = res.sum / static_cast<double>(p.size());
  return res;
}

struct RocPoint {
  double fpr = 0.0, tpr = 0.0, threshold = 0.0;
};

struct RocResult {
  double auc = 0.0;
  std::vector<RocPoint> curve;  // thresholds descending, (0,0) .. (1,1)
};

// Rank-based AUC (Mann-Whitney with half-credit for ties) plus the ROC
// polyline; trapezoid area of the polyline reproduces the same AUC.
inline RocResult roc_auc(const Eigen::VectorXd& score, const Eigen::VectorXd& label) {
  const int n = static_cast<int>(score.size());
  if (label.size() != n || n == 0) throw DataError("roc_auc: size mismatch or empty");
  long npos = 0, nneg = 0;
  for (int i = 0; i < n; ++i) {
    if (label[i] == 1.0)
      ++npos;
    else if (label[i] == 0.0)
      ++nneg;
    else
      throw DataError("roc_auc: labels must be 0 or 1");
  }
  if (npos == 0 || nneg == 0) throw DataError("roc_auc: needs both classes present");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return score[a] < score[b]; });
  // midranks -> U statistic
  double rank_sum_pos = 0.0;
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && score[idx[j + 1]] == score[idx[i]]) ++j;
    const double midrank = 0.5 * (i + j) + 1.0;  // ranks are 1-based
    for (int k = i; k <= j; ++k)
      if (label[idx[k]] == 1.0) rank_sum_pos += midrank;
    i = j + 1;
  }
  RocResult res;
  const double u = rank_sum_pos - 0.5 * npos * (npos + 1.0);
  res.auc = u / (static_cast<double>(npos) * static_cast<double>(nneg));
  // curve: sweep thresholds from high to low, tie groups move diagonally
  res.curve.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  long tp = 0, fp = 0;
  int k = n - 1;
  while (k >= 0) {
    int j = k;
    while (j - 1 >= 0 && score[idx[j - 1]] == score[idx[k]]) --j;
    for (int t = j; t <= k; ++t) {
      if (label[idx[t]] == 1.0)
        ++tp;
      else
        ++fp;
    }
    res.curve.push_back({static_cast<double>(fp) / nneg, static_cast<double>(tp) / npos, score[idx[k]]});
    k = j - 1;
  }
  return res;
}

inline double roc_trapezoid_area(const std::vector<RocPoint>& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    area += 0.5 * (curve[i].tpr + curve[i - 1].tpr) * (curve[i].fpr - curve[i - 1].fpr);
  return area;
}

}  // namespace epr
