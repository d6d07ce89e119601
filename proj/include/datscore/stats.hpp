#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace datscore::stats {

// Standard normal density and distribution function.
double normal_pdf(double x);
double normal_cdf(double x);
double log_normal_cdf(double x);
// phi(x) / Phi(x), stable for large negative x.
double inverse_mills(double x);

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

// P(T > t) for Student's t with (possibly fractional) df > 0.
double student_t_upper(double t, double df);
double student_t_two_sided(double t, double df);

struct FeatureScore {
  std::string feature_id;
  double statistic = 0.0;
  double p_value = 1.0;
  double effect_size = 0.0;  // +inf marks a perfectly separating feature
  bool collapsed = false;    // Fisher only: an empty genotype column was dropped
  bool testable = true;      // false when a class had no usable observations
};

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;
  double cohens_d = 0.0;  // |d| with pooled-sd denominator
};

/// Two-sample Welch t-test with Welch-Satterthwaite degrees of freedom and a
/// two-sided p-value. Requires at least two observations per sample.
WelchResult welch_t_test(std::span<const double> x, std::span<const double> y);

// 2 classes x 3 genotype columns (minor-allele count 0, 1, 2).
using GenotypeTable = std::array<std::array<std::int64_t, 3>, 2>;

struct FisherResult {
  double p_value = 1.0;
  double cramers_v = 0.0;
  bool collapsed = false;
};

/// Exact test on a 2x3 table with fixed margins: sums the hypergeometric
/// probabilities of every table no more likely than the observed one.
/// Effect size is Cramer's V.
FisherResult fisher_exact_test(const GenotypeTable& table);

// Cramer's V of a 2x3 table, zero columns ignored.
double cramers_v(const GenotypeTable& table);

}  // namespace datscore::stats
