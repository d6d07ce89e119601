#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "datscore/cohort.hpp"

namespace datscore::harmonize {

/// Subjects x ROI volumes in mm^3.
struct RoiVolumeTable {
  std::vector<std::string> subject_ids;
  std::vector<std::string> roi_names;
  Eigen::MatrixXd volumes;

  void validate() const;  // shape agreement, finite and positive volumes
};

// subject_id + one column per ROI.
RoiVolumeTable read_volumes_csv(const std::filesystem::path& path);
void write_volumes_csv(const RoiVolumeTable& table, const std::filesystem::path& path);

// Which nuisance covariates enter the design. Age is never regressed out.
struct DesignSpec {
  bool sex = true;
  bool field_strength = true;
  bool scanner = true;
  bool tiv = true;

  static DesignSpec intercept_only() { return {false, false, false, false}; }
};

/// Per-ROI OLS fit on the reference group. Categorical covariates are
/// one-hot encoded with the first (sorted) level dropped.
struct GlmModel {
  DesignSpec design;
  std::vector<std::string> design_columns;
  std::vector<std::string> sex_levels;
  std::vector<std::string> field_strength_levels;
  std::vector<std::string> scanner_levels;
  std::vector<std::string> roi_names;
  Eigen::MatrixXd coefficients;  // design columns x ROIs
  Eigen::VectorXd residual_sd;   // per ROI, residual degrees of freedom n - p
  std::vector<std::string> reference_subjects;
};

GlmModel fit_glm(const RoiVolumeTable& volumes, const cohort::CovariateTable& covariates,
                 std::span<const std::string> reference_subjects, const DesignSpec& design = {});

struct WScoreTable {
  std::vector<std::string> subject_ids;
  std::vector<std::string> roi_names;
  Eigen::MatrixXd scores;     // NaN rows for flagged subjects
  std::vector<bool> missing;  // covariates absent or a level unseen at fit time

  std::size_t row_of(const std::string& id) const;  // npos when absent
};

/// w = (observed - predicted) / residual_sd under the frozen model.
WScoreTable compute_wscores(const RoiVolumeTable& volumes, const cohort::CovariateTable& covariates,
                            const GlmModel& model);

void write_wscores_csv(const WScoreTable& table, const std::filesystem::path& path);
WScoreTable read_wscores_csv(const std::filesystem::path& path);

}  // namespace datscore::harmonize
