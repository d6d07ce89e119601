#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "datscore/cohort.hpp"
#include "datscore/featsel.hpp"
#include "datscore/harmonize.hpp"
#include "datscore/mkl.hpp"
#include "datscore/plink_io.hpp"

namespace datscore::ensemble {

/// Row lookup over the recoded genotypes and the w-score table. Either may be
/// absent when only one modality is in use.
class FeatureSource {
 public:
  FeatureSource(const plink::RecodedGenotypes* genotypes, const harmonize::WScoreTable* wscores);

  bool has(const std::string& subject, featsel::Modality modality) const;
  // True when the subject has every block the feature ids need.
  bool covers(const std::string& subject, std::span<const std::string> feature_ids) const;
  // subjects x features; genetic missing calls stay -1. Throws when a row is absent.
  Eigen::MatrixXd rows(std::span<const std::string> subjects, std::span<const std::string> feature_ids) const;
  // The namespaced ids available in one modality.
  std::vector<std::string> feature_ids(featsel::Modality modality) const;

  const plink::RecodedGenotypes* genotypes() const { return genotypes_; }
  const harmonize::WScoreTable* wscores() const { return wscores_; }
  std::optional<std::size_t> genotype_row(const std::string& subject) const;
  std::optional<std::size_t> wscore_row(const std::string& subject) const;

 private:
  const plink::RecodedGenotypes* genotypes_;
  const harmonize::WScoreTable* wscores_;
  std::unordered_map<std::string, std::size_t> geno_rows_, w_rows_;
  std::unordered_map<std::string, std::size_t> geno_cols_, w_cols_;
};

struct EnsembleModel {
  featsel::Modality modality = featsel::Modality::genetic;
  featsel::FeatureSet feature_set;
  featsel::SubBagPlan plan;
  std::vector<mkl::MklModel> members;
};

/// One member per subset: sNC rows labelled -1, sDAT rows +1, restricted to
/// the feature set.
EnsembleModel train_ensemble(const FeatureSource& source, const featsel::FeatureSet& features,
                             const featsel::SubBagPlan& plan, const mkl::MklConfig& config);

enum class ScoreStatus { scored, unscorable, missing_modality };
const char* to_string(ScoreStatus s);

struct DatScore {
  std::string subject_id;
  std::optional<cohort::Stratum> stratum;  // unknown when scoring new subjects
  double score = 0.0;  // NaN unless scored
  std::size_t n_members = 0;
  cohort::Trajectory predicted = cohort::Trajectory::DAT_minus;
  ScoreStatus status = ScoreStatus::scored;
};

struct DatScoreTable {
  featsel::Modality modality = featsel::Modality::genetic;
  double threshold = 0.5;
  std::vector<DatScore> rows;

  std::vector<const DatScore*> scored() const;
};

struct Subject {
  std::string id;
  std::optional<cohort::Stratum> stratum;
};

/// Out-of-bag scores: each subject averages only the members whose subset
/// did not contain it. Subjects inside every subset are marked unscorable.
DatScoreTable score_oob(const EnsembleModel& model, const FeatureSource& source,
                        std::span<const Subject> training_subjects, double threshold = 0.5);

/// Average over all members for subjects the ensemble never trained on.
DatScoreTable score_unseen(const EnsembleModel& model, const FeatureSource& source,
                           std::span<const Subject> subjects, double threshold = 0.5);

// predicted = DAT+ exactly when score >= threshold.
DatScoreTable threshold_labels(DatScoreTable table, double threshold);

// subject_id,stratum,modality,score,n_members,predicted,status
void write_scores_csv(const DatScoreTable& table, const std::filesystem::path& path);
void write_scores_csv(const DatScoreTable& table, std::ostream& out);
DatScoreTable read_scores_csv(const std::filesystem::path& path);

}  // namespace datscore::ensemble
