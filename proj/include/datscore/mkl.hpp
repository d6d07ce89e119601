#pragma once

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

#include "datscore/featsel.hpp"

namespace datscore::mkl {

enum class KernelKind { linear, poly1, poly2, poly3, gaussian };

const char* to_string(KernelKind k);
KernelKind parse_kernel_kind(std::string_view s);
int degree_of(KernelKind k);  // 1 for linear, 0 for gaussian

struct KernelSpec {
  KernelKind kind = KernelKind::linear;
  featsel::Modality block = featsel::Modality::genetic;
  bool normalize = true;
};

/// Base kernels over the training rows. `scales` holds the trace
/// normalization factors so test kernels can be put on the same footing.
struct KernelStack {
  std::vector<KernelSpec> specs;
  std::vector<Eigen::MatrixXd> kernels;
  std::vector<double> scales;

  std::size_t size() const { return kernels.size(); }
  Eigen::Index n() const { return kernels.empty() ? 0 : kernels.front().rows(); }
};

// linear: x'y; poly-d: (x'y/p + 1)^d with p the block width; gaussian: exp(-|x-y|^2/p).
double kernel_value(KernelKind kind, const Eigen::Ref<const Eigen::RowVectorXd>& a,
                    const Eigen::Ref<const Eigen::RowVectorXd>& b);

/// `blocks[j]` names the feature block of column j; each spec only sees its block.
KernelStack build_kernels(const Eigen::MatrixXd& x, std::span<const featsel::Modality> blocks,
                          std::span<const KernelSpec> specs);

/// Test-by-train kernel matrices scaled with the training normalization factors.
std::vector<Eigen::MatrixXd> cross_kernels(const Eigen::MatrixXd& x_test, const Eigen::MatrixXd& x_train,
                                           std::span<const featsel::Modality> blocks,
                                           const KernelStack& train_stack);

struct MklConfig {
  double tau = 1.0;
  int max_iters = 200;
  double tol = 1e-6;  // relative bound improvement
  std::vector<KernelKind> kernels{KernelKind::linear, KernelKind::poly1, KernelKind::poly2,
                                  KernelKind::poly3};
  bool normalize = true;

  void validate() const;
};

struct MklFit {
  Eigen::VectorXd alpha;
  Eigen::VectorXd beta;
  std::vector<double> elbo_trace;  // bound before the first and after every iteration
  bool converged = false;
  int iterations = 0;
};

/// sum_i log Phi(y_i f_i) - tau/2 alpha' K_beta alpha with f = K_beta alpha.
double bound(const KernelStack& stack, const Eigen::VectorXd& y, const Eigen::VectorXd& alpha,
             const Eigen::VectorXd& beta, double tau);
// Gradient of the bound in beta at fixed alpha.
Eigen::VectorXd bound_gradient_beta(const KernelStack& stack, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta,
                                    double tau);

// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v);

/// Variational EM for the composite-kernel probit model. Labels are +-1.
MklFit train(const KernelStack& stack, const Eigen::VectorXd& y, const MklConfig& config);

Eigen::VectorXd latent(const MklFit& fit, std::span<const Eigen::MatrixXd> test_kernels);
Eigen::VectorXd predict(const MklFit& fit, std::span<const Eigen::MatrixXd> test_kernels);

/// A trained classifier bundled with everything needed to score new rows.
struct MklModel {
  std::vector<std::string> feature_ids;
  std::vector<featsel::Modality> blocks;
  std::vector<double> impute_values;  // training mode for genetic columns, NaN otherwise
  std::vector<std::string> training_subjects;
  Eigen::MatrixXd train_x;  // after imputation
  Eigen::VectorXd labels;
  std::vector<KernelSpec> specs;
  std::vector<double> scales;
  double tau = 1.0;
  MklFit fit;
};

/// Missing genetic calls (-1) are replaced by the per-feature training mode.
MklModel fit_model(const Eigen::MatrixXd& x, std::span<const std::string> feature_ids,
                   std::span<const std::string> training_subjects, const Eigen::VectorXd& y,
                   const MklConfig& config);

/// DAT+ probabilities for rows whose columns follow model.feature_ids.
Eigen::VectorXd predict_proba(const MklModel& model, const Eigen::MatrixXd& x_test);

}  // namespace datscore::mkl
