#include "datscore/mkl.hpp"

#include <Eigen/Cholesky>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "datscore/error.hpp"
#include "datscore/stats.hpp"

namespace datscore::mkl {

const char* to_string(KernelKind k) {
  switch (k) {
    case KernelKind::linear: return "linear";
    case KernelKind::poly1: return "poly1";
    case KernelKind::poly2: return "poly2";
    case KernelKind::poly3: return "poly3";
    case KernelKind::gaussian: return "gaussian";
  }
  return "?";
}

KernelKind parse_kernel_kind(std::string_view s) {
  for (auto k : {KernelKind::linear, KernelKind::poly1, KernelKind::poly2, KernelKind::poly3,
                 KernelKind::gaussian})
    if (s == to_string(k)) return k;
  throw ValidationError(fmt::format("unknown kernel '{}'", s));
}

int degree_of(KernelKind k) {
  switch (k) {
    case KernelKind::linear:
    case KernelKind::poly1: return 1;
    case KernelKind::poly2: return 2;
    case KernelKind::poly3: return 3;
    case KernelKind::gaussian: return 0;
  }
  return 0;
}

void MklConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ValidationError(fmt::format("mkl tau {} must be > 0", tau));
  if (max_iters < 1) throw ValidationError("mkl max_iters must be >= 1");
  if (!(tol >= 0.0)) throw ValidationError("mkl tol must be >= 0");
  if (kernels.empty()) throw ValidationError("mkl needs at least one kernel");
}

namespace {

std::vector<Eigen::Index> block_columns(std::span<const featsel::Modality> blocks, featsel::Modality b) {
  std::vector<Eigen::Index> cols;
  for (std::size_t j = 0; j < blocks.size(); ++j)
    if (blocks[j] == b) cols.push_back(static_cast<Eigen::Index>(j));
  return cols;
}

Eigen::MatrixXd take_columns(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = x.col(cols[j]);
  return out;
}

// Kernel between the rows of a and b (both restricted to one block).
Eigen::MatrixXd gram(KernelKind kind, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double p = static_cast<double>(a.cols());
  if (p == 0) throw ValidationError("kernel block has no features");
  Eigen::MatrixXd k = a * b.transpose();
  switch (kind) {
    case KernelKind::linear: break;
    case KernelKind::poly1:
    case KernelKind::poly2:
    case KernelKind::poly3: {
      k = (k.array() / p + 1.0).matrix();
      const int d = degree_of(kind);
      if (d == 2) k = k.array().square().matrix();
      if (d == 3) k = k.array().cube().matrix();
      break;
    }
    case KernelKind::gaussian: {
      const Eigen::VectorXd na = a.rowwise().squaredNorm();
      const Eigen::RowVectorXd nb = b.rowwise().squaredNorm().transpose();
      Eigen::MatrixXd d2 = (-2.0 * k).colwise() + na;
      d2.rowwise() += nb;
      k = (-d2.array().max(0.0) / p).exp().matrix();
      break;
    }
  }
  return k;
}

void require_finite(const Eigen::MatrixXd& x, const char* what) {
  if (!x.allFinite()) throw ValidationError(fmt::format("{} contains non-finite entries", what));
}

Eigen::MatrixXd combine(const KernelStack& stack, const Eigen::VectorXd& beta) {
  Eigen::MatrixXd k = beta(0) * stack.kernels[0];
  for (std::size_t m = 1; m < stack.size(); ++m) k += beta(static_cast<Eigen::Index>(m)) * stack.kernels[m];
  return k;
}

double bound_at(const Eigen::VectorXd& y, const Eigen::VectorXd& f, const Eigen::VectorXd& alpha,
                double tau) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) ll += stats::log_normal_cdf(y(i) * f(i));
  return ll - 0.5 * tau * alpha.dot(f);
}

}  // namespace

double kernel_value(KernelKind kind, const Eigen::Ref<const Eigen::RowVectorXd>& a,
                    const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  return gram(kind, Eigen::MatrixXd(a), Eigen::MatrixXd(b))(0, 0);
}

KernelStack build_kernels(const Eigen::MatrixXd& x, std::span<const featsel::Modality> blocks,
                          std::span<const KernelSpec> specs) {
  if (static_cast<std::size_t>(x.cols()) != blocks.size())
    throw ValidationError("kernel block assignment does not match the feature count");
  require_finite(x, "kernel input");
  KernelStack stack;
  const double n = static_cast<double>(x.rows());
  for (const auto& spec : specs) {
    const auto cols = block_columns(blocks, spec.block);
    if (cols.empty())
      throw ValidationError(fmt::format("no {} features for the {} kernel", featsel::to_string(spec.block),
                                        to_string(spec.kind)));
    const Eigen::MatrixXd xb = take_columns(x, cols);
    Eigen::MatrixXd k = gram(spec.kind, xb, xb);
    k = 0.5 * (k + k.transpose());
    require_finite(k, "kernel matrix");
    double scale = 1.0;
    if (spec.normalize) {
      const double tr = k.trace();
      if (!(tr > 0.0))
        throw NumericalError(fmt::format("{} kernel on the {} block has zero trace", to_string(spec.kind),
                                         featsel::to_string(spec.block)));
      scale = n / tr;
      k *= scale;
    }
    stack.specs.push_back(spec);
    stack.kernels.push_back(std::move(k));
    stack.scales.push_back(scale);
  }
  return stack;
}

std::vector<Eigen::MatrixXd> cross_kernels(const Eigen::MatrixXd& x_test, const Eigen::MatrixXd& x_train,
                                           std::span<const featsel::Modality> blocks,
                                           const KernelStack& train_stack) {
  if (x_test.cols() != x_train.cols() || static_cast<std::size_t>(x_test.cols()) != blocks.size())
    throw ValidationError("test features do not match the training features");
  require_finite(x_test, "test kernel input");
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t m = 0; m < train_stack.size(); ++m) {
    const auto& spec = train_stack.specs[m];
    const auto cols = block_columns(blocks, spec.block);
    out.push_back(gram(spec.kind, take_columns(x_test, cols), take_columns(x_train, cols)) *
                  train_stack.scales[m]);
  }
  return out;
}

double bound(const KernelStack& stack, const Eigen::VectorXd& y, const Eigen::VectorXd& alpha,
             const Eigen::VectorXd& beta, double tau) {
  const Eigen::VectorXd f = combine(stack, beta) * alpha;
  return bound_at(y, f, alpha, tau);
}

Eigen::VectorXd bound_gradient_beta(const KernelStack& stack, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta,
                                    double tau) {
  const Eigen::VectorXd f = combine(stack, beta) * alpha;
  Eigen::VectorXd w(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) w(i) = y(i) * stats::inverse_mills(y(i) * f(i));
  Eigen::VectorXd g(static_cast<Eigen::Index>(stack.size()));
  for (std::size_t m = 0; m < stack.size(); ++m) {
    const Eigen::VectorXd km_alpha = stack.kernels[m] * alpha;
    g(static_cast<Eigen::Index>(m)) = w.dot(km_alpha) - 0.5 * tau * alpha.dot(km_alpha);
  }
  return g;
}

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  Eigen::VectorXd w = (v.array() - theta).max(0.0).matrix();
  const double s = w.sum();
  if (s > 0.0) w /= s;
  return w;
}

MklFit train(const KernelStack& stack, const Eigen::VectorXd& y, const MklConfig& config) {
  config.validate();
  const Eigen::Index n = stack.n();
  if (stack.size() == 0) throw ValidationError("mkl training needs at least one kernel");
  if (y.size() != n) throw ValidationError(fmt::format("{} labels for {} training rows", y.size(), n));
  bool pos = false, neg = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y(i) == 1.0) pos = true;
    else if (y(i) == -1.0) neg = true;
    else throw ValidationError(fmt::format("label {} is not +-1", y(i)));
  }
  if (!pos || !neg) throw ValidationError("mkl training needs both classes");

  const auto M = static_cast<Eigen::Index>(stack.size());
  const double tau = config.tau;
  MklFit fit;
  fit.alpha = Eigen::VectorXd::Zero(n);
  fit.beta = Eigen::VectorXd::Constant(M, 1.0 / static_cast<double>(M));
  Eigen::MatrixXd kb = combine(stack, fit.beta);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  double j_cur = bound_at(y, f, fit.alpha, tau);
  fit.elbo_trace.push_back(j_cur);
  double step = 1.0;

  Eigen::VectorXd zbar(n);
  for (int it = 1; it <= config.max_iters; ++it) {
    // E-step: posterior mean of the truncated-normal latent.
    for (Eigen::Index i = 0; i < n; ++i) {
      const double u = y(i) * f(i);
      zbar(i) = y(i) * (u + stats::inverse_mills(u));
    }
    // M-step for alpha.
    Eigen::MatrixXd a = kb;
    a.diagonal().array() += tau;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success)
      throw NumericalError(fmt::format("K_beta + tau I is not positive definite (tau = {}); try a larger tau",
                                       tau));
    fit.alpha = llt.solve(zbar);
    f.noalias() = kb * fit.alpha;
    double j_alpha = bound_at(y, f, fit.alpha, tau);

    // M-step for beta: projected gradient ascent, halving until the bound does not drop.
    if (M > 1) {
      for (int inner = 0; inner < 5; ++inner) {
        const Eigen::VectorXd g = bound_gradient_beta(stack, y, fit.alpha, fit.beta, tau);
        bool accepted = false;
        for (int h = 0; h < 60; ++h) {
          const Eigen::VectorXd cand = project_simplex(fit.beta + step * g);
          const Eigen::MatrixXd kc = combine(stack, cand);
          const Eigen::VectorXd fc = kc * fit.alpha;
          const double jc = bound_at(y, fc, fit.alpha, tau);
          if (jc >= j_alpha) {
            const double gain = jc - j_alpha;
            fit.beta = cand;
            kb = kc;
            f = fc;
            j_alpha = jc;
            step = std::min(step * 2.0, 1e6);
            accepted = gain > 0.0;
            break;
          }
          step *= 0.5;
        }
        if (!accepted) break;
      }
    }

    fit.iterations = it;
    fit.elbo_trace.push_back(j_alpha);
    const double gain = j_alpha - j_cur;
    j_cur = j_alpha;
    if (gain < config.tol * std::max(1.0, std::abs(j_cur))) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

Eigen::VectorXd latent(const MklFit& fit, std::span<const Eigen::MatrixXd> test_kernels) {
  if (static_cast<Eigen::Index>(test_kernels.size()) != fit.beta.size())
    throw ValidationError(fmt::format("{} test kernels for a model with {} kernels", test_kernels.size(),
                                      fit.beta.size()));
  if (test_kernels.empty()) return {};
  Eigen::VectorXd f = Eigen::VectorXd::Zero(test_kernels[0].rows());
  for (std::size_t m = 0; m < test_kernels.size(); ++m) {
    if (test_kernels[m].cols() != fit.alpha.size())
      throw ValidationError("test kernel width does not match the training size");
    f.noalias() += fit.beta(static_cast<Eigen::Index>(m)) * (test_kernels[m] * fit.alpha);
  }
  return f;
}

Eigen::VectorXd predict(const MklFit& fit, std::span<const Eigen::MatrixXd> test_kernels) {
  Eigen::VectorXd p = latent(fit, test_kernels);
  for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = stats::normal_cdf(p(i));
  return p;
}

namespace {

void impute(Eigen::MatrixXd& x, std::span<const featsel::Modality> blocks,
            std::span<const double> values) {
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    if (blocks[j] != featsel::Modality::genetic) continue;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (x(i, static_cast<Eigen::Index>(j)) < 0.0) x(i, static_cast<Eigen::Index>(j)) = values[j];
  }
}

}  // namespace

MklModel fit_model(const Eigen::MatrixXd& x, std::span<const std::string> feature_ids,
                   std::span<const std::string> training_subjects, const Eigen::VectorXd& y,
                   const MklConfig& config) {
  config.validate();
  if (static_cast<std::size_t>(x.cols()) != feature_ids.size() ||
      static_cast<std::size_t>(x.rows()) != training_subjects.size())
    throw ValidationError("training matrix does not match its ids");
  MklModel m;
  m.feature_ids.assign(feature_ids.begin(), feature_ids.end());
  m.training_subjects.assign(training_subjects.begin(), training_subjects.end());
  m.tau = config.tau;
  m.labels = y;
  for (const auto& id : feature_ids) m.blocks.push_back(featsel::modality_of(id));
  for (std::size_t j = 0; j < feature_ids.size(); ++j) {
    if (m.blocks[j] != featsel::Modality::genetic) {
      m.impute_values.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    std::map<double, int> counts;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double v = x(i, static_cast<Eigen::Index>(j));
      if (v >= 0.0) ++counts[v];
    }
    double mode = 0.0;
    int best = 0;
    for (const auto& [v, c] : counts)
      if (c > best) {
        best = c;
        mode = v;
      }
    m.impute_values.push_back(mode);
  }
  m.train_x = x;
  impute(m.train_x, m.blocks, m.impute_values);

  for (auto block : {featsel::Modality::genetic, featsel::Modality::mri}) {
    if (std::find(m.blocks.begin(), m.blocks.end(), block) == m.blocks.end()) continue;
    for (auto kind : config.kernels) m.specs.push_back({kind, block, config.normalize});
  }
  const auto stack = build_kernels(m.train_x, m.blocks, m.specs);
  m.scales = stack.scales;
  m.fit = train(stack, y, config);
  return m;
}

Eigen::VectorXd predict_proba(const MklModel& model, const Eigen::MatrixXd& x_test) {
  if (static_cast<std::size_t>(x_test.cols()) != model.feature_ids.size())
    throw ValidationError(fmt::format("{} test columns for a model with {} features", x_test.cols(),
                                      model.feature_ids.size()));
  Eigen::MatrixXd x = x_test;
  impute(x, model.blocks, model.impute_values);
  KernelStack ref;
  ref.specs = model.specs;
  ref.scales = model.scales;
  ref.kernels.resize(model.specs.size());
  const auto k = cross_kernels(x, model.train_x, model.blocks, ref);
  return predict(model.fit, k);
}

}  // namespace datscore::mkl
