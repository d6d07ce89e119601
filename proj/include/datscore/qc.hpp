#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "datscore/plink_io.hpp"

namespace datscore::qc {

struct QcThresholds {
  double max_snp_missing_rate = 0.05;
  double max_subject_missing_rate = 0.05;
  double min_maf = 0.01;
  double hwe_alpha = 1e-6;  // 0 disables the HWE filter
  double het_sd_window = 3.0;

  void validate() const;
  // Every filter turned off: missing rates 1, MAF 0, HWE 0, infinite window.
  static QcThresholds disabled();
};

enum class Reason {
  snp_missingness,
  subject_missingness,
  low_maf,
  all_missing,
  hwe,
  heterozygosity,
};

const char* reason_name(Reason r);

struct DroppedItem {
  std::string id;
  Reason reason;
  double value;  // the statistic that triggered the drop
};

struct QcReport {
  std::vector<DroppedItem> dropped_snps;
  std::vector<DroppedItem> dropped_subjects;
  std::map<std::string, std::size_t> per_filter_counts;
  // QC steps outside this toolkit, recorded as skipped.
  std::vector<std::string> skipped_steps;
  std::uint64_t seed = 0;
  bool empty_result = false;

  void merge(const QcReport& other);
};

struct QcResult {
  plink::RecodedGenotypes genotypes;
  QcReport report;
};

/// Exact Hardy-Weinberg test: two-sided p-value summing the conditional
/// heterozygote-count probabilities (given allele totals) that do not exceed
/// the observed one. Symmetric in the two homozygote counts.
double hwe_exact_test(std::int64_t n_hom_major, std::int64_t n_het, std::int64_t n_hom_minor);

// Drops SNPs above the SNP missing rate, then subjects above the subject rate
// (over surviving SNPs), repeating until neither pass removes anything.
QcResult missingness_filter(const plink::RecodedGenotypes& g, const QcThresholds& t);
QcResult maf_filter(const plink::RecodedGenotypes& g, const QcThresholds& t);
QcResult hwe_filter(const plink::RecodedGenotypes& g, const QcThresholds& t);
// Trims subjects whose autosomal heterozygosity rate leaves mean +- window*sd,
// recomputing the cohort statistics until no subject is removed.
QcResult heterozygosity_filter(const plink::RecodedGenotypes& g, const QcThresholds& t);

// missingness -> MAF -> HWE -> heterozygosity.
QcResult run_qc_pipeline(const plink::RecodedGenotypes& g, const QcThresholds& t,
                         std::uint64_t seed = 0);

// Minor-allele frequency over non-missing calls; NaN for an all-missing column.
double minor_allele_frequency(const plink::RecodedGenotypes& g, std::size_t feature);

}  // namespace datscore::qc
