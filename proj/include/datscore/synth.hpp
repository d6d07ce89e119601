#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "datscore/cohort.hpp"
#include "datscore/featsel.hpp"
#include "datscore/harmonize.hpp"
#include "datscore/plink_io.hpp"

namespace datscore::synth {

// How often a stratum carries the genetic risk profile and the atrophy pattern.
struct StratumProfile {
  double genetic_case_fraction = 0.0;
  double atrophy_fraction = 0.0;
};

struct SynthConfig {
  std::map<cohort::Stratum, std::size_t> group_sizes;  // defaults to the ADNI1 counts
  std::map<cohort::Stratum, StratumProfile> profiles;
  std::size_t n_snps = 10000;
  std::size_t n_causal_snps = 10;
  double causal_or = 3.0;  // per minor allele
  double maf_lo = 0.05, maf_hi = 0.5;
  double causal_maf_lo = 0.2, causal_maf_hi = 0.5;
  double genotype_missing_rate = 0.001;
  double apoe_e4_or = 3.0;  // per e4 allele, applied to genetic cases
  std::vector<std::string> affected_rois;
  double atrophy_effect = 1.2;  // residual-sd units
  double noise_cv = 0.08;       // residual sd as a fraction of the ROI mean
  bool screening_visit = true;  // a non-imaging visit before baseline
  std::uint64_t seed = 0;

  static SynthConfig defaults();
  // No planted genetics or atrophy.
  static SynthConfig null_model();
  void validate() const;
  std::size_t total_subjects() const;
};

/// The 91 FreeSurfer-style ROI names: 68 cortical, 16 subcortical, 7 CSF spaces.
const std::vector<std::string>& roi_names();

struct GroundTruth {
  std::vector<std::string> causal_snp_ids;
  std::vector<std::string> affected_rois;
  std::map<std::string, cohort::Stratum> strata;
  std::map<std::string, double> latent_risk;  // sum of causal minor-allele counts * ln(OR)
  std::map<std::string, bool> genetic_case;
  std::map<std::string, bool> atrophic;
};

struct SynthDataset {
  plink::GenotypeMatrix genotypes;
  plink::ApoeTable apoe;
  harmonize::RoiVolumeTable volumes;
  std::vector<cohort::DiagnosisTimeline> timelines;
  cohort::CovariateTable covariates;
  GroundTruth truth;
};

SynthDataset generate(const SynthConfig& config);

struct DatasetPaths {
  std::filesystem::path genotype_prefix, volumes, timelines, covariates, apoe, ground_truth;
  static DatasetPaths in(const std::filesystem::path& dir);
};

// Writes the PLINK trio, the CSVs and ground_truth.json into `dir`.
DatasetPaths write_dataset(const SynthDataset& data, const std::filesystem::path& dir);
GroundTruth read_ground_truth(const std::filesystem::path& path);

struct RecoveryStats {
  std::size_t planted = 0;
  std::size_t selected = 0;
  std::size_t hits = 0;
  double recall = 0.0;
  double precision = 0.0;
  bool precision_undefined = false;  // nothing of this kind was selected
};

struct Recovery {
  RecoveryStats snps;
  RecoveryStats rois;
};

/// Overlap between planted features and a selected set, per modality.
Recovery describe_truth(const GroundTruth& truth, const featsel::FeatureSet& selected);

}  // namespace datscore::synth
