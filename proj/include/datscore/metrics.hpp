#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "datscore/cohort.hpp"
#include "datscore/ensemble.hpp"

namespace datscore::metrics {

// Undefined metrics (an empty class) are nullopt rather than 0.
struct CellAccuracy {
  std::size_t n = 0;
  std::size_t correct = 0;
  std::optional<double> accuracy;
};

struct MetricsReport {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  std::optional<double> accuracy;
  std::optional<double> balanced_accuracy;
  std::optional<double> auc;
  std::map<cohort::Stratum, CellAccuracy> per_stratum;
  // "NC", "MCI", "DAT", "DAT-", "DAT+".
  std::map<std::string, CellAccuracy> rollups;
};

// Stratum unions used for the rollups.
const std::map<std::string, std::vector<cohort::Stratum>>& rollup_groups();

/// Mann-Whitney AUC with ties counted one half; nullopt when a class is empty.
std::optional<double> auc(std::span<const double> scores, std::span<const bool> positive);

/// DAT+ is the positive class. `predicted_positive` and `positive` run in parallel with `scores`.
MetricsReport confusion_metrics(std::span<const double> scores, std::span<const bool> predicted_positive,
                                std::span<const bool> positive,
                                std::span<const cohort::Stratum> strata);

// Truth is the trajectory implied by each subject's stratum; unscored rows are skipped.
MetricsReport confusion_metrics(const ensemble::DatScoreTable& table);

enum class PairedVariant {
  per_arm_variance,    // (m1 - m2) / sqrt(s1^2/n + s2^2/n), the default
  difference_variance  // mean(d) / (sd(d)/sqrt(n))
};

struct PairedTestResult {
  double t_statistic = 0.0;
  int df = 0;
  double p_one_sided = 0.5;  // upper tail of Student-t with n - 1 df
  double mean_diff = 0.0;
  std::size_t n = 0;
  bool defined = true;  // false when the denominator is zero
  PairedVariant variant = PairedVariant::per_arm_variance;
};

PairedTestResult paired_one_sided_t(std::span<const double> a, std::span<const double> b,
                                    PairedVariant variant = PairedVariant::per_arm_variance);

/// Pairs two score tables by subject id, restricted to one stratum. Both
/// tables must have scored the same subjects in it.
PairedTestResult paired_one_sided_t(const ensemble::DatScoreTable& a, const ensemble::DatScoreTable& b,
                                    cohort::Stratum stratum,
                                    PairedVariant variant = PairedVariant::per_arm_variance);

}  // namespace datscore::metrics
