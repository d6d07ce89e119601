#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "datscore/error.hpp"
#include "datscore/featsel.hpp"

namespace datscore::featsel {
namespace {

double soft_threshold(double z, double lambda) {
  if (z > lambda) return z - lambda;
  if (z < -lambda) return z + lambda;
  return 0.0;
}

struct Solver {
  const Eigen::MatrixXd& x;
  const Eigen::VectorXd& y;
  double n;
  Eigen::VectorXd col_scale;  // x_j'x_j / n

  Solver(const Eigen::MatrixXd& x_, const Eigen::VectorXd& y_)
      : x(x_), y(y_), n(static_cast<double>(x_.rows())) {
    col_scale = x.colwise().squaredNorm().transpose() / n;
  }

  // One coordinate update; returns |change| scaled by the column norm.
  double update(Eigen::Index j, double lambda, Eigen::VectorXd& beta, Eigen::VectorXd& r) const {
    if (col_scale(j) == 0.0) {
      beta(j) = 0.0;
      return 0.0;
    }
    const double old = beta(j);
    const double z = x.col(j).dot(r) / n + col_scale(j) * old;
    const double next = soft_threshold(z, lambda) / col_scale(j);
    if (next != old) {
      r.noalias() -= (next - old) * x.col(j);
      beta(j) = next;
    }
    return std::abs(next - old) * std::sqrt(col_scale(j));
  }

  double kkt_violation(double lambda, const Eigen::VectorXd& beta, const Eigen::VectorXd& r) const {
    const Eigen::VectorXd g = x.transpose() * r / n;
    double worst = 0.0;
    for (Eigen::Index j = 0; j < g.size(); ++j) {
      const double v = beta(j) == 0.0 ? std::max(0.0, std::abs(g(j)) - lambda)
                                      : std::abs(g(j) - (beta(j) > 0 ? lambda : -lambda));
      worst = std::max(worst, v);
    }
    return worst;
  }

  void solve(double lambda, Eigen::VectorXd& beta, const LassoOptions& opts) const {
    Eigen::VectorXd r = y - x * beta;
    std::size_t sweeps = 0;
    while (true) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) update(j, lambda, beta, r);
      ++sweeps;
      // Refine on the active set before paying for another full pass.
      while (sweeps < opts.max_sweeps) {
        double change = 0.0;
        for (Eigen::Index j = 0; j < x.cols(); ++j)
          if (beta(j) != 0.0) change = std::max(change, update(j, lambda, beta, r));
        ++sweeps;
        if (change < 0.1 * opts.kkt_tol) break;
      }
      // Recompute the residual to shed accumulated rounding before the check.
      r = y - x * beta;
      if (kkt_violation(lambda, beta, r) <= opts.kkt_tol) return;
      if (sweeps >= opts.max_sweeps)
        throw NumericalError(fmt::format("LASSO did not converge at lambda {} after {} sweeps", lambda,
                                         sweeps));
    }
  }
};

}  // namespace

void lasso_solve(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                 Eigen::VectorXd& beta, const LassoOptions& opts) {
  if (x.rows() != y.size()) throw ValidationError("LASSO design and response lengths differ");
  if (beta.size() != x.cols()) beta = Eigen::VectorXd::Zero(x.cols());
  Solver(x, y).solve(lambda, beta, opts);
}

LassoPath lasso_path(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::size_t k,
                     const LassoOptions& opts) {
  if (x.rows() != y.size()) throw ValidationError("LASSO design and response lengths differ");
  if (x.rows() == 0) throw ValidationError("LASSO needs at least one subject");
  if (opts.path_steps < 2) throw ValidationError("LASSO path needs at least two steps");
  const Solver solver(x, y);
  LassoPath path;
  path.lambda_max = (x.transpose() * y).cwiseAbs().maxCoeff() / solver.n;
  path.coefficients = Eigen::VectorXd::Zero(x.cols());
  path.lambda = path.lambda_max;
  if (k == 0) return path;

  std::vector<std::size_t> entered;
  std::vector<bool> ever(static_cast<std::size_t>(x.cols()), false);
  std::size_t active = 0;
  if (path.lambda_max > 0.0) {
    for (std::size_t t = 1; t < opts.path_steps; ++t) {
      const double frac = static_cast<double>(t) / static_cast<double>(opts.path_steps - 1);
      const double lambda = path.lambda_max * std::pow(opts.lambda_min_ratio, frac);
      solver.solve(lambda, path.coefficients, opts);
      path.lambda = lambda;

      std::vector<std::size_t> fresh;
      active = 0;
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (path.coefficients(j) == 0.0) continue;
        ++active;
        if (!ever[static_cast<std::size_t>(j)]) fresh.push_back(static_cast<std::size_t>(j));
      }
      std::sort(fresh.begin(), fresh.end(), [&](std::size_t a, std::size_t b) {
        const double ca = std::abs(path.coefficients(static_cast<Eigen::Index>(a)));
        const double cb = std::abs(path.coefficients(static_cast<Eigen::Index>(b)));
        return ca != cb ? ca > cb : a < b;
      });
      for (auto j : fresh) {
        ever[j] = true;
        entered.push_back(j);
      }
      if (active >= k) break;
    }
  }
  for (auto j : entered) {
    if (path.entry_order.size() == k) break;
    if (path.coefficients(static_cast<Eigen::Index>(j)) != 0.0) path.entry_order.push_back(j);
  }
  path.short_of_k = path.entry_order.size() < k;
  return path;
}

LassoSelection lasso_select(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            std::span<const std::string> feature_ids, std::size_t k,
                            const LassoOptions& opts) {
  if (static_cast<std::size_t>(x.cols()) != feature_ids.size())
    throw ValidationError("feature ids do not match the LASSO design columns");
  const auto path = lasso_path(x, y, k, opts);
  LassoSelection sel;
  sel.short_of_k = path.short_of_k;
  for (auto j : path.entry_order) sel.feature_ids.push_back(feature_ids[j]);
  return sel;
}

}  // namespace datscore::featsel
