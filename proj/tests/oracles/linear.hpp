#pragma once

// Dense reference solvers used to cross-check the library.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace oracle {

// Least squares through the SVD pseudo-inverse.
inline Eigen::MatrixXd ols(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  return x.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(y);
}

// KKT residual of (1/2n)||y - Xb||^2 + lambda ||b||_1: the largest violation of
// g_j = -lambda sign(b_j) on the support and |g_j| <= lambda off it, g = X'(y - Xb)/n.
inline double lasso_kkt(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& b,
                        double lambda) {
  const Eigen::VectorXd g = x.transpose() * (y - x * b) / static_cast<double>(x.rows());
  double worst = 0.0;
  for (Eigen::Index j = 0; j < b.size(); ++j) {
    if (b(j) != 0.0)
      worst = std::max(worst, std::abs(g(j) - lambda * (b(j) > 0 ? 1.0 : -1.0)));
    else
      worst = std::max(worst, std::abs(g(j)) - lambda);
  }
  return worst;
}

// For orthonormal columns scaled so X'X = n I the LASSO solution is a soft
// threshold of X'y/n; columns enter in decreasing |X'y| order.
inline std::vector<std::size_t> orthonormal_entry_order(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const Eigen::VectorXd c = (x.transpose() * y).cwiseAbs();
  std::vector<std::size_t> idx(static_cast<std::size_t>(c.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return c(a) > c(b); });
  return idx;
}

// (x'y/p + 1)^2 through the explicit degree-2 feature map.
inline double poly2_explicit(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  const auto p = static_cast<double>(a.size());
  auto phi = [p](const Eigen::RowVectorXd& v) {
    std::vector<double> f{1.0};
    for (Eigen::Index i = 0; i < v.size(); ++i) f.push_back(std::sqrt(2.0 / p) * v(i));
    for (Eigen::Index i = 0; i < v.size(); ++i)
      for (Eigen::Index j = 0; j < v.size(); ++j) f.push_back(v(i) * v(j) / p);
    return f;
  };
  const auto fa = phi(a), fb = phi(b);
  return std::inner_product(fa.begin(), fa.end(), fb.begin(), 0.0);
}

// Mann-Whitney AUC by counting every positive/negative pair.
inline double auc_pairs(const std::vector<double>& s, const std::vector<bool>& pos) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (pos[i] && !pos[j]) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

}  // namespace oracle
