#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "datscore/plink_io.hpp"
#include "datscore/stats.hpp"

namespace datscore::featsel {

enum class Modality { genetic, mri, combined };

const char* to_string(Modality m);
Modality parse_modality(std::string_view s);

// Feature id namespaces keep genetic and MRI ids disjoint.
std::string snp_feature_id(std::string_view snp_id);
std::string roi_feature_id(std::string_view roi_name);
// Modality a namespaced id belongs to; throws on an unknown prefix.
Modality modality_of(std::string_view feature_id);
std::string_view strip_namespace(std::string_view feature_id);

struct SubBag {
  std::vector<std::string> negative;  // class -1 (sNC), sorted
  std::vector<std::string> positive;  // class +1 (sDAT), sorted
  std::vector<std::string> oob_negative;
  std::vector<std::string> oob_positive;
};

struct SubBagPlan {
  std::size_t f_subsets = 10;
  double sampling_ratio = 0.8;
  std::uint64_t seed = 0;
  std::size_t per_class = 0;  // round(ratio * min class size)
  std::vector<SubBag> subsets;
  bool oob_empty = false;  // every subset used the whole training set

  std::size_t subset_size() const { return 2 * per_class; }
  // floor(subset size / 10), the feature budget per subset.
  std::size_t k_max() const { return subset_size() / 10; }
};

/// F balanced subsets, each drawing round(ratio * min class) subjects per
/// class without replacement. Input order does not matter.
SubBagPlan make_subbag_plan(std::span<const std::string> negative_ids,
                            std::span<const std::string> positive_ids, std::size_t f, double ratio,
                            std::uint64_t seed);

using stats::FeatureScore;

/// Fisher exact test per genotype feature between two row sets. Missing calls
/// (-1) are excluded from the counts. Ids carry the snp: namespace.
std::vector<FeatureScore> score_genetic(const plink::RecodedGenotypes& g,
                                        std::span<const std::size_t> negative_rows,
                                        std::span<const std::size_t> positive_rows);

/// Welch t-test per column of a subjects x features matrix.
std::vector<FeatureScore> score_continuous(const Eigen::MatrixXd& values,
                                           std::span<const std::string> feature_ids,
                                           std::span<const std::size_t> negative_rows,
                                           std::span<const std::size_t> positive_rows);

// Ranking order: effect size descending, then p ascending, then id.
bool ranks_before(const FeatureScore& a, const FeatureScore& b);

/// Top-k feature ids without sorting the whole list.
std::vector<std::string> select_per_subset(std::span<const FeatureScore> scores, std::size_t k);

struct SelectedFeature {
  std::string feature_id;
  double frequency = 0.0;  // selection count / F
  Modality source = Modality::genetic;
};

struct FeatureSet {
  Modality modality = Modality::genetic;
  std::size_t k = 0;
  std::vector<SelectedFeature> features;
  // Every feature selected in at least one subset, count / F.
  std::map<std::string, double> candidate_frequency;
  std::vector<std::string> warnings;

  std::vector<std::string> ids() const;
  std::vector<std::string> ids_of(Modality source) const;
};

/// Ranks features by how many subsets selected them and keeps exactly k. The
/// boundary tie is resolved by a seeded uniform draw.
FeatureSet aggregate_frequency(std::span<const std::vector<std::string>> per_subset, std::size_t k,
                               std::uint64_t seed, Modality modality);

/// Unique union of a genetic and an MRI set.
FeatureSet combine_modalities(const FeatureSet& genetic, const FeatureSet& mri);

// A user-supplied list, frequency 1 each. Ids must be namespaced.
FeatureSet fixed_feature_set(std::span<const std::string> ids, Modality modality);

/// Dosage design (0/1/2) for the given rows and features; missing calls are
/// imputed to the column mean over the same rows.
Eigen::MatrixXd genetic_design(const plink::RecodedGenotypes& g, std::span<const std::size_t> rows);

// Centers each column and scales it to unit variance (1/n); constant columns become zero.
void standardize_columns(Eigen::MatrixXd& x);

struct LassoPath {
  std::vector<std::size_t> entry_order;  // column indices, first k active ones
  double lambda = 0.0;                   // where the walk stopped
  double lambda_max = 0.0;
  Eigen::VectorXd coefficients;          // at lambda
  bool short_of_k = false;               // fewer than k activated before lambda_min
};

struct LassoOptions {
  std::size_t path_steps = 100;
  double lambda_min_ratio = 1e-4;
  double kkt_tol = 1e-9;
  std::size_t max_sweeps = 100000;
};

/// Coordinate descent on (1/2n)||y - X b||^2 + lambda ||b||_1, walking a
/// geometric lambda path down from lambda_max until k features are active.
LassoPath lasso_path(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::size_t k,
                     const LassoOptions& opts = {});

// Solves the LASSO at a single lambda (warm start from `beta`).
void lasso_solve(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                 Eigen::VectorXd& beta, const LassoOptions& opts = {});

struct LassoSelection {
  std::vector<std::string> feature_ids;
  bool short_of_k = false;
};

LassoSelection lasso_select(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                            std::span<const std::string> feature_ids, std::size_t k,
                            const LassoOptions& opts = {});

}  // namespace datscore::featsel
