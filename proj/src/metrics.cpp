#include "datscore/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "datscore/error.hpp"
#include "datscore/stats.hpp"

namespace datscore::metrics {

using cohort::Stratum;

const std::map<std::string, std::vector<Stratum>>& rollup_groups() {
  static const std::map<std::string, std::vector<Stratum>> groups{
      {"NC", {Stratum::sNC, Stratum::uNC, Stratum::pNC}},
      {"MCI", {Stratum::sMCI, Stratum::pMCI}},
      {"DAT", {Stratum::eDAT, Stratum::sDAT}},
      {"DAT-", {Stratum::sNC, Stratum::uNC, Stratum::sMCI}},
      {"DAT+", {Stratum::pNC, Stratum::pMCI, Stratum::eDAT, Stratum::sDAT}},
  };
  return groups;
}

std::optional<double> auc(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw ValidationError("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double n_pos = 0, n_neg = 0, rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) {
        rank_sum += mid_rank;
        ++n_pos;
      } else {
        ++n_neg;
      }
    }
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  return (rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg);
}

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

void tally(CellAccuracy& c, bool correct) {
  ++c.n;
  if (correct) ++c.correct;
  c.accuracy = ratio(c.correct, c.n);
}

}  // namespace

MetricsReport confusion_metrics(std::span<const double> scores, std::span<const bool> predicted_positive,
                                std::span<const bool> positive, std::span<const Stratum> strata) {
  if (scores.size() != positive.size() || predicted_positive.size() != positive.size() ||
      strata.size() != positive.size())
    throw ValidationError("confusion_metrics: inputs differ in length");
  MetricsReport r;
  for (std::size_t i = 0; i < positive.size(); ++i) {
    const bool p = predicted_positive[i];
    if (positive[i]) (p ? r.tp : r.fn)++;
    else (p ? r.fp : r.tn)++;
    const bool correct = p == positive[i];
    tally(r.per_stratum[strata[i]], correct);
    for (const auto& [name, members] : rollup_groups())
      if (std::find(members.begin(), members.end(), strata[i]) != members.end()) tally(r.rollups[name], correct);
  }
  r.sensitivity = ratio(r.tp, r.tp + r.fn);
  r.specificity = ratio(r.tn, r.tn + r.fp);
  r.accuracy = ratio(r.tp + r.tn, positive.size());
  if (r.sensitivity && r.specificity) r.balanced_accuracy = (*r.sensitivity + *r.specificity) / 2.0;
  r.auc = auc(scores, positive);
  return r;
}

MetricsReport confusion_metrics(const ensemble::DatScoreTable& table) {
  std::vector<double> scores;
  std::vector<Stratum> strata;
  std::vector<char> pred, truth;
  for (const auto* row : table.scored()) {
    if (!row->stratum)
      throw ValidationError(fmt::format("subject '{}' has no stratum to evaluate against", row->subject_id));
    scores.push_back(row->score);
    strata.push_back(*row->stratum);
    pred.push_back(row->predicted == cohort::Trajectory::DAT_plus);
    truth.push_back(cohort::trajectory_of(*row->stratum) == cohort::Trajectory::DAT_plus);
  }
  // std::vector<bool> has no contiguous storage to span over.
  auto as_bool = [](const std::vector<char>& v) {
    std::unique_ptr<bool[]> b(new bool[v.size()]);
    for (std::size_t i = 0; i < v.size(); ++i) b[i] = v[i] != 0;
    return b;
  };
  const auto p = as_bool(pred);
  const auto t = as_bool(truth);
  return confusion_metrics(scores, std::span<const bool>(p.get(), pred.size()),
                           std::span<const bool>(t.get(), truth.size()), strata);
}

PairedTestResult paired_one_sided_t(std::span<const double> a, std::span<const double> b,
                                    PairedVariant variant) {
  if (a.size() != b.size()) throw ValidationError("paired t-test: arms differ in length");
  if (a.size() < 2) throw ValidationError("paired t-test needs at least two pairs");
  const double n = static_cast<double>(a.size());
  PairedTestResult r;
  r.n = a.size();
  r.df = static_cast<int>(a.size()) - 1;
  r.variant = variant;

  auto mean = [](std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto var = [](std::span<const double> v, double m) {
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
  };

  double num = 0.0, den2 = 0.0;
  if (variant == PairedVariant::per_arm_variance) {
    const double ma = mean(a), mb = mean(b);
    num = ma - mb;
    den2 = var(a, ma) / n + var(b, mb) / n;
  } else {
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const double md = mean(d);
    num = md;
    den2 = var(d, md) / n;
  }
  r.mean_diff = num;
  if (!(den2 > 0.0)) {
    r.defined = false;
    r.t_statistic = std::nan("");
    r.p_one_sided = std::nan("");
    return r;
  }
  r.t_statistic = num / std::sqrt(den2);
  r.p_one_sided = stats::student_t_upper(r.t_statistic, static_cast<double>(r.df));
  return r;
}

PairedTestResult paired_one_sided_t(const ensemble::DatScoreTable& a, const ensemble::DatScoreTable& b,
                                    Stratum stratum, PairedVariant variant) {
  std::map<std::string, double> sa, sb;
  for (const auto* r : a.scored())
    if (r->stratum == stratum) sa[r->subject_id] = r->score;
  for (const auto* r : b.scored())
    if (r->stratum == stratum) sb[r->subject_id] = r->score;
  if (sa.size() != sb.size() ||
      !std::equal(sa.begin(), sa.end(), sb.begin(), [](const auto& x, const auto& y) { return x.first == y.first; }))
    throw ValidationError(fmt::format("paired t-test: the two tables scored different {} subjects",
                                      cohort::to_string(stratum)));
  std::vector<double> va, vb;
  for (const auto& [id, s] : sa) va.push_back(s);
  for (const auto& [id, s] : sb) vb.push_back(s);
  return paired_one_sided_t(va, vb, variant);
}

}  // namespace datscore::metrics
