#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace datscore::cohort {

enum class Diagnosis { NC, MCI, DAT };

struct Visit {
  int month = 0;
  Diagnosis diagnosis = Diagnosis::NC;
  bool is_imaging = false;
};

struct DiagnosisTimeline {
  std::string subject_id;
  std::vector<Visit> visits;
};

enum class Stratum { sNC, uNC, pNC, sMCI, pMCI, eDAT, sDAT };
enum class Trajectory { DAT_minus, DAT_plus };

inline constexpr std::array<Stratum, 7> kAllStrata{Stratum::sNC,  Stratum::uNC,  Stratum::pNC,
                                                   Stratum::sMCI, Stratum::pMCI, Stratum::eDAT,
                                                   Stratum::sDAT};

struct StratumLabel {
  Stratum stratum = Stratum::sNC;
  Trajectory trajectory = Trajectory::DAT_minus;

  bool operator==(const StratumLabel&) const = default;
};

const char* to_string(Stratum s);
const char* to_string(Diagnosis d);
const char* to_string(Trajectory t);
Stratum parse_stratum(std::string_view s);
Diagnosis parse_diagnosis(std::string_view s);
Trajectory trajectory_of(Stratum s);

/// Seven-way stratification anchored at the earliest imaging visit.
/// Baseline NC: sNC / uNC (reaches MCI) / pNC (reaches DAT).
/// Baseline MCI: sMCI / pMCI (reaches DAT).
/// Baseline DAT: eDAT when an earlier visit was NC or MCI, else sDAT.
/// Visits are sorted by month first; a non-DAT diagnosis after a DAT
/// diagnosis is rejected.
StratumLabel stratify(const DiagnosisTimeline& timeline);

struct Covariates {
  double age = 0.0;
  std::string sex;
  std::string field_strength;
  std::string scanner;
  double tiv = 0.0;  // mm^3
};

using CovariateTable = std::map<std::string, Covariates>;

// subject_id,month,diagnosis,is_imaging -- one row per visit.
std::vector<DiagnosisTimeline> read_timelines_csv(const std::filesystem::path& path);
void write_timelines_csv(std::span<const DiagnosisTimeline> timelines,
                         const std::filesystem::path& path);
// subject_id,age,sex,field_strength,scanner,tiv
CovariateTable read_covariates_csv(const std::filesystem::path& path);
void write_covariates_csv(const CovariateTable& table, const std::filesystem::path& path);

struct CohortSubject {
  std::string subject_id;
  StratumLabel label;
  std::optional<Covariates> covariates;
  std::optional<std::size_t> genotype_row;
  std::optional<std::size_t> mri_row;

  bool has_all_modalities() const { return genotype_row && mri_row; }
};

struct Cohort {
  std::vector<CohortSubject> subjects;

  std::map<Stratum, std::size_t> stratum_counts() const;
  // Subjects with every modality present (the only ones used for training).
  std::size_t training_eligible_count() const;
  std::vector<std::string> ids_in(Stratum s, bool require_all_modalities) const;
  const CohortSubject* find(std::string_view id) const;
};

/// Joins timelines with covariates and the genotype / MRI subject id spaces.
/// Subjects missing a modality stay in the cohort with that row unset.
Cohort build_cohort(std::span<const DiagnosisTimeline> timelines, const CovariateTable& covariates,
                    std::span<const std::string> genotype_ids,
                    std::span<const std::string> mri_ids);

}  // namespace datscore::cohort
