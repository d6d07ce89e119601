#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "datscore/error.hpp"
#include "datscore/metrics.hpp"
#include "oracles/linear.hpp"
#include "oracles/student_t.hpp"

using namespace datscore;
using namespace datscore::metrics;
using cohort::Stratum;

namespace {

// std::vector<bool> has no contiguous storage.
struct Flags {
  explicit Flags(const std::vector<bool>& v) : data(new bool[v.size()]), n(v.size()) {
    for (std::size_t i = 0; i < n; ++i) data[i] = v[i];
  }
  std::span<const bool> span() const { return {data.get(), n}; }
  std::unique_ptr<bool[]> data;
  std::size_t n;
};

std::optional<double> auc_of(const std::vector<double>& s, const std::vector<bool>& pos) {
  return auc(s, Flags(pos).span());
}

}  // namespace

TEST_CASE("AUC examples and the pair-counting oracle") {
  // One of four pairs is discordant.
  CHECK(*auc_of({0.1, 0.4, 0.35, 0.8}, {false, false, true, true}) == doctest::Approx(0.75));
  // One tied pair counts one half.
  CHECK(*auc_of({0.1, 0.35, 0.35, 0.8}, {false, false, true, true}) == doctest::Approx(0.875));
  CHECK(*auc_of({0.1, 0.2, 0.8, 0.9}, {false, false, true, true}) == 1.0);
  CHECK(*auc_of({0.3, 0.3, 0.3}, {false, true, true}) == 0.5);
  CHECK_FALSE(auc_of({0.3, 0.4}, {true, true}).has_value());

  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> grid(0, 20);
  std::bernoulli_distribution coin(0.4);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<double> s;
    std::vector<bool> p, q;
    for (int i = 0; i < 80; ++i) {
      s.push_back(grid(rng) / 20.0);  // heavy ties
      p.push_back(coin(rng));
      q.push_back(!p.back());
    }
    const double a = *auc_of(s, p);
    CHECK(a == doctest::Approx(oracle::auc_pairs(s, p)).epsilon(1e-12));
    CHECK(a + *auc_of(s, q) == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<double> t;
    for (double v : s) t.push_back(std::exp(3 * v) - 7);
    CHECK(*auc_of(t, p) == a);
  }
}

TEST_CASE("confusion metrics") {
  // 30 negatives and 70 positives all scored 0.6.
  std::vector<double> s(100, 0.6);
  std::vector<bool> pred(100, true), truth(100);
  std::vector<Stratum> strata(100);
  for (int i = 0; i < 100; ++i) {
    truth[static_cast<std::size_t>(i)] = i >= 30;
    strata[static_cast<std::size_t>(i)] = i < 30 ? Stratum::sNC : (i < 50 ? Stratum::pMCI : Stratum::sDAT);
  }
  const Flags fp(pred), ft(truth);
  const auto m = confusion_metrics(s, fp.span(), ft.span(), strata);
  CHECK(*m.sensitivity == 1.0);
  CHECK(*m.specificity == 0.0);
  CHECK(*m.balanced_accuracy == 0.5);
  CHECK(*m.accuracy == doctest::Approx(0.7));
  CHECK(*m.auc == 0.5);
  CHECK(m.per_stratum.at(Stratum::sNC).accuracy == 0.0);
  CHECK(m.per_stratum.at(Stratum::pMCI).n == 20);
  CHECK(m.rollups.at("DAT+").n == 70);
  CHECK(m.rollups.at("DAT-").n == 30);

  // Accuracy is the size-weighted mean of per-stratum accuracy.
  std::vector<bool> mixed(100);
  for (std::size_t i = 0; i < 100; ++i) mixed[i] = i % 3 != 0;
  const Flags fm(mixed);
  const auto mm = confusion_metrics(s, fm.span(), ft.span(), strata);
  double weighted = 0;
  for (const auto& [st, cell] : mm.per_stratum) weighted += static_cast<double>(cell.correct);
  CHECK(*mm.accuracy == doctest::Approx(weighted / 100.0));

  const Flags perfect(truth);
  const auto pm = confusion_metrics(s, perfect.span(), ft.span(), strata);
  CHECK(*pm.sensitivity == 1.0);
  CHECK(*pm.specificity == 1.0);
  std::vector<bool> flipped(100);
  for (std::size_t i = 0; i < 100; ++i) flipped[i] = !truth[i];
  const Flags ff(flipped);
  const auto wm = confusion_metrics(s, ff.span(), ft.span(), strata);
  CHECK(*wm.sensitivity == 0.0);
  CHECK(*wm.specificity == 0.0);
}

TEST_CASE("metrics from a score table skip unscored rows and leave empty classes undefined") {
  ensemble::DatScoreTable t;
  t.rows.push_back({"a", Stratum::pNC, 0.7, 10, {}, ensemble::ScoreStatus::scored});
  t.rows.push_back({"b", Stratum::pNC, 0.2, 10, {}, ensemble::ScoreStatus::scored});
  t.rows.push_back({"c", Stratum::pNC, std::nan(""), 0, {}, ensemble::ScoreStatus::missing_modality});
  t = ensemble::threshold_labels(t, 0.5);
  const auto m = confusion_metrics(t);
  CHECK(m.tp == 1);
  CHECK(m.fn == 1);
  CHECK_FALSE(m.specificity.has_value());
  CHECK_FALSE(m.auc.has_value());
  CHECK(m.per_stratum.at(Stratum::pNC).n == 2);
}

TEST_CASE("paired one-sided t-test against a high-precision oracle") {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> z;
  std::vector<double> a, b;
  for (int i = 0; i < 14; ++i) {
    const double base = 0.5 + 0.1 * z(rng);
    a.push_back(base + 0.4 + 0.15 * z(rng));
    b.push_back(base + 0.15 * z(rng));
  }
  for (bool per_arm : {true, false}) {
    const auto v = per_arm ? PairedVariant::per_arm_variance : PairedVariant::difference_variance;
    const auto r = paired_one_sided_t(a, b, v);
    const auto o = oracle::paired(a, b, per_arm);
    CHECK(r.df == 13);
    CHECK(r.t_statistic == doctest::Approx(o.t).epsilon(1e-12));
    CHECK(std::abs(r.p_one_sided - o.p) <= 1e-10);
    const auto rev = paired_one_sided_t(b, a, v);
    CHECK(rev.t_statistic == doctest::Approx(-r.t_statistic).epsilon(1e-14));
    CHECK(rev.p_one_sided == doctest::Approx(1.0 - r.p_one_sided).epsilon(1e-10));
  }

  const auto same = paired_one_sided_t(a, a);
  CHECK(same.t_statistic == 0.0);
  CHECK(same.p_one_sided == 0.5);
  CHECK(same.defined);
  CHECK_FALSE(paired_one_sided_t(a, a, PairedVariant::difference_variance).defined);
  const std::vector<double> c(5, 0.3), d(5, 0.3);
  CHECK_FALSE(paired_one_sided_t(c, d, PairedVariant::difference_variance).defined);
  const std::vector<double> shorter{0.1};
  CHECK_THROWS_AS(paired_one_sided_t(shorter, shorter), ValidationError);
  CHECK_THROWS_AS(paired_one_sided_t(a, c), ValidationError);
}

TEST_CASE("table pairing matches subjects by id within a stratum") {
  ensemble::DatScoreTable ta, tb;
  const double sa[] = {0.9, 0.8, 0.7, 0.85}, sb[] = {0.3, 0.5, 0.4, 0.2};
  for (int i = 0; i < 4; ++i) {
    ta.rows.push_back({"p" + std::to_string(i), Stratum::pNC, sa[i], 10, {}, ensemble::ScoreStatus::scored});
    tb.rows.insert(tb.rows.begin(),
                   {"p" + std::to_string(i), Stratum::pNC, sb[i], 10, {}, ensemble::ScoreStatus::scored});
  }
  ta.rows.push_back({"m", Stratum::sMCI, 0.1, 10, {}, ensemble::ScoreStatus::scored});
  const auto r = paired_one_sided_t(ta, tb, Stratum::pNC);
  const auto direct = paired_one_sided_t(std::vector<double>(sa, sa + 4), std::vector<double>(sb, sb + 4));
  CHECK(r.n == 4);
  CHECK(r.t_statistic == doctest::Approx(direct.t_statistic));
}
