#include "datscore/qc.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>

#include "datscore/error.hpp"

namespace datscore::qc {
namespace {

using plink::FeatureKind;
using plink::RecodedGenotypes;

std::vector<std::size_t> iota_vec(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

bool is_autosome(const std::string& chrom) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(chrom.data(), chrom.data() + chrom.size(), v);
  return ec == std::errc() && ptr == chrom.data() + chrom.size() && v >= 1 && v <= 22;
}

void count_drop(QcReport& r, Reason reason) { ++r.per_filter_counts[reason_name(reason)]; }

QcResult finish(const RecodedGenotypes& g, std::span<const std::size_t> rows,
                std::span<const std::size_t> cols, QcReport report) {
  QcResult out{g.select(rows, cols), std::move(report)};
  out.report.empty_result = rows.empty() || cols.empty();
  return out;
}

std::array<std::int64_t, 3> genotype_counts(const RecodedGenotypes& g, std::size_t col,
                                            std::span<const std::size_t> rows) {
  std::array<std::int64_t, 3> c{};
  const auto j = static_cast<Eigen::Index>(col);
  for (auto r : rows) {
    const auto v = g.values(static_cast<Eigen::Index>(r), j);
    if (v >= 0) ++c[static_cast<std::size_t>(v)];
  }
  return c;
}

}  // namespace

void QcThresholds::validate() const {
  auto frac = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0))
      throw ValidationError(fmt::format("qc threshold {} = {} is not in [0, 1]", name, v));
  };
  frac(max_snp_missing_rate, "max_snp_missing_rate");
  frac(max_subject_missing_rate, "max_subject_missing_rate");
  frac(min_maf, "min_maf");
  if (!(hwe_alpha >= 0.0 && hwe_alpha < 1.0))
    throw ValidationError(fmt::format("qc threshold hwe_alpha = {} is not in [0, 1)", hwe_alpha));
  if (!(het_sd_window > 0.0))
    throw ValidationError(fmt::format("qc threshold het_sd_window = {} must be > 0", het_sd_window));
}

QcThresholds QcThresholds::disabled() {
  return {1.0, 1.0, 0.0, 0.0, std::numeric_limits<double>::infinity()};
}

const char* reason_name(Reason r) {
  switch (r) {
    case Reason::snp_missingness: return "snp_missingness";
    case Reason::subject_missingness: return "subject_missingness";
    case Reason::low_maf: return "low_maf";
    case Reason::all_missing: return "all_missing";
    case Reason::hwe: return "hwe";
    case Reason::heterozygosity: return "heterozygosity";
  }
  return "unknown";
}

void QcReport::merge(const QcReport& other) {
  dropped_snps.insert(dropped_snps.end(), other.dropped_snps.begin(), other.dropped_snps.end());
  dropped_subjects.insert(dropped_subjects.end(), other.dropped_subjects.begin(),
                          other.dropped_subjects.end());
  for (const auto& [k, v] : other.per_filter_counts) per_filter_counts[k] += v;
  empty_result = other.empty_result;
}

double hwe_exact_test(std::int64_t n_hom_major, std::int64_t n_het, std::int64_t n_hom_minor) {
  if (n_hom_major < 0 || n_het < 0 || n_hom_minor < 0)
    throw ValidationError("hwe_exact_test: negative genotype count");
  const std::int64_t n = n_hom_major + n_het + n_hom_minor;
  if (n == 0) throw ValidationError("hwe_exact_test: no genotypes");
  const std::int64_t rare = std::min(2 * n_hom_major + n_het, 2 * n_hom_minor + n_het);
  if (rare == 0) return 1.0;

  // Heterozygote counts share the parity of the rare allele count. Weights are
  // built outward from a start near the mode so none overflow.
  const std::int64_t lo = rare % 2;
  const auto slots = static_cast<std::size_t>((rare - lo) / 2 + 1);
  auto het_at = [&](std::size_t i) { return lo + 2 * static_cast<std::int64_t>(i); };
  const double expected =
      static_cast<double>(rare) * static_cast<double>(2 * n - rare) / static_cast<double>(2 * n);
  auto start = static_cast<std::size_t>(std::clamp<double>(
      std::floor((expected - static_cast<double>(lo)) / 2.0), 0.0, static_cast<double>(slots - 1)));

  std::vector<double> w(slots, 0.0);
  w[start] = 1.0;
  for (std::size_t i = start; i > 0; --i) {
    // P(h - 2) / P(h) = h (h - 1) / (4 (hom_rare + 1) (hom_common + 1)) evaluated at h.
    const double h = static_cast<double>(het_at(i));
    const double hom_r = static_cast<double>((rare - het_at(i)) / 2);
    const double hom_c = static_cast<double>(n - het_at(i)) - hom_r;
    w[i - 1] = w[i] * h * (h - 1.0) / (4.0 * (hom_r + 1.0) * (hom_c + 1.0));
  }
  for (std::size_t i = start; i + 1 < slots; ++i) {
    const double h = static_cast<double>(het_at(i));
    const double hom_r = static_cast<double>((rare - het_at(i)) / 2);
    const double hom_c = static_cast<double>(n - het_at(i)) - hom_r;
    w[i + 1] = w[i] * 4.0 * hom_r * hom_c / ((h + 2.0) * (h + 1.0));
  }
  const double observed = w[static_cast<std::size_t>((n_het - lo) / 2)];
  const double cut = observed * (1.0 + 1e-12);
  double total = 0.0;
  double tail = 0.0;
  for (double x : w) {
    total += x;
    if (x <= cut) tail += x;
  }
  return std::min(1.0, tail / total);
}

double minor_allele_frequency(const RecodedGenotypes& g, std::size_t feature) {
  const auto j = static_cast<Eigen::Index>(feature);
  std::int64_t sum = 0, called = 0;
  for (Eigen::Index i = 0; i < g.values.rows(); ++i) {
    const auto v = g.values(i, j);
    if (v < 0) continue;
    sum += v;
    ++called;
  }
  if (called == 0) return std::numeric_limits<double>::quiet_NaN();
  const double f = static_cast<double>(sum) / (2.0 * static_cast<double>(called));
  return std::min(f, 1.0 - f);
}

QcResult missingness_filter(const RecodedGenotypes& g, const QcThresholds& t) {
  t.validate();
  QcReport rep;
  std::vector<std::size_t> rows = iota_vec(g.subject_count());
  std::vector<std::size_t> cols = iota_vec(g.feature_count());
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<std::size_t> kept_cols;
    for (auto c : cols) {
      if (g.kinds[c] == FeatureKind::apoe || rows.empty()) {
        kept_cols.push_back(c);
        continue;
      }
      std::size_t missing = 0;
      for (auto r : rows)
        if (g.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) < 0) ++missing;
      const double rate = static_cast<double>(missing) / static_cast<double>(rows.size());
      if (rate > t.max_snp_missing_rate) {
        rep.dropped_snps.push_back({g.feature_ids[c], Reason::snp_missingness, rate});
        count_drop(rep, Reason::snp_missingness);
        changed = true;
      } else {
        kept_cols.push_back(c);
      }
    }
    cols = std::move(kept_cols);

    std::vector<std::size_t> snp_cols;
    for (auto c : cols)
      if (g.kinds[c] == FeatureKind::snp) snp_cols.push_back(c);
    if (snp_cols.empty()) break;
    std::vector<std::size_t> kept_rows;
    for (auto r : rows) {
      std::size_t missing = 0;
      for (auto c : snp_cols)
        if (g.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) < 0) ++missing;
      const double rate = static_cast<double>(missing) / static_cast<double>(snp_cols.size());
      if (rate > t.max_subject_missing_rate) {
        rep.dropped_subjects.push_back({g.subject_ids[r], Reason::subject_missingness, rate});
        count_drop(rep, Reason::subject_missingness);
        changed = true;
      } else {
        kept_rows.push_back(r);
      }
    }
    rows = std::move(kept_rows);
  }
  return finish(g, rows, cols, std::move(rep));
}

QcResult maf_filter(const RecodedGenotypes& g, const QcThresholds& t) {
  t.validate();
  QcReport rep;
  const auto rows = iota_vec(g.subject_count());
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < g.feature_count(); ++c) {
    if (g.kinds[c] == FeatureKind::apoe || t.min_maf <= 0.0) {
      cols.push_back(c);
      continue;
    }
    const double maf = minor_allele_frequency(g, c);
    if (std::isnan(maf)) {
      rep.dropped_snps.push_back({g.feature_ids[c], Reason::all_missing, 0.0});
      count_drop(rep, Reason::all_missing);
    } else if (maf < t.min_maf) {
      rep.dropped_snps.push_back({g.feature_ids[c], Reason::low_maf, maf});
      count_drop(rep, Reason::low_maf);
    } else {
      cols.push_back(c);
    }
  }
  return finish(g, rows, cols, std::move(rep));
}

QcResult hwe_filter(const RecodedGenotypes& g, const QcThresholds& t) {
  t.validate();
  QcReport rep;
  const auto rows = iota_vec(g.subject_count());
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < g.feature_count(); ++c) {
    if (g.kinds[c] == FeatureKind::apoe || t.hwe_alpha <= 0.0) {
      cols.push_back(c);
      continue;
    }
    const auto k = genotype_counts(g, c, rows);
    if (k[0] + k[1] + k[2] == 0) {
      cols.push_back(c);
      continue;
    }
    const double p = hwe_exact_test(k[0], k[1], k[2]);
    if (p < t.hwe_alpha) {
      rep.dropped_snps.push_back({g.feature_ids[c], Reason::hwe, p});
      count_drop(rep, Reason::hwe);
    } else {
      cols.push_back(c);
    }
  }
  return finish(g, rows, cols, std::move(rep));
}

QcResult heterozygosity_filter(const RecodedGenotypes& g, const QcThresholds& t) {
  t.validate();
  if (g.subject_count() < 2)
    throw ValidationError("heterozygosity_filter needs at least two subjects");
  QcReport rep;
  std::vector<std::size_t> auto_cols;
  for (std::size_t c = 0; c < g.feature_count(); ++c)
    if (g.kinds[c] == FeatureKind::snp && is_autosome(g.chromosomes[c])) auto_cols.push_back(c);

  std::vector<double> rate(g.subject_count(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t r = 0; r < g.subject_count(); ++r) {
    std::size_t het = 0, called = 0;
    for (auto c : auto_cols) {
      const auto v = g.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      if (v < 0) continue;
      ++called;
      if (v == 1) ++het;
    }
    if (called > 0) rate[r] = static_cast<double>(het) / static_cast<double>(called);
  }

  std::vector<std::size_t> rows = iota_vec(g.subject_count());
  while (true) {
    double sum = 0.0;
    std::size_t n = 0;
    for (auto r : rows)
      if (!std::isnan(rate[r])) { sum += rate[r]; ++n; }
    if (n < 2) break;
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (auto r : rows)
      if (!std::isnan(rate[r])) ss += (rate[r] - mean) * (rate[r] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd == 0.0) break;
    const double half_width = t.het_sd_window * sd;
    std::vector<std::size_t> kept;
    for (auto r : rows) {
      if (!std::isnan(rate[r]) && std::abs(rate[r] - mean) > half_width) {
        rep.dropped_subjects.push_back({g.subject_ids[r], Reason::heterozygosity, rate[r]});
        count_drop(rep, Reason::heterozygosity);
      } else {
        kept.push_back(r);
      }
    }
    if (kept.size() == rows.size()) break;
    rows = std::move(kept);
  }
  return finish(g, rows, iota_vec(g.feature_count()), std::move(rep));
}

QcResult run_qc_pipeline(const RecodedGenotypes& g, const QcThresholds& t, std::uint64_t seed) {
  t.validate();
  g.validate();
  QcReport report;
  report.seed = seed;
  report.skipped_steps = {"gender_check: not_implemented", "sibling_ibd: not_implemented",
                          "population_stratification: not_implemented"};
  for (auto reason : {Reason::snp_missingness, Reason::subject_missingness, Reason::low_maf,
                      Reason::all_missing, Reason::hwe, Reason::heterozygosity})
    report.per_filter_counts[reason_name(reason)] = 0;

  auto step = missingness_filter(g, t);
  report.merge(step.report);
  step = maf_filter(step.genotypes, t);
  report.merge(step.report);
  step = hwe_filter(step.genotypes, t);
  report.merge(step.report);
  if (step.genotypes.subject_count() >= 2) {
    step = heterozygosity_filter(step.genotypes, t);
    report.merge(step.report);
  }
  report.empty_result = step.genotypes.subject_count() == 0 || step.genotypes.feature_count() == 0;
  return {std::move(step.genotypes), std::move(report)};
}

}  // namespace datscore::qc
