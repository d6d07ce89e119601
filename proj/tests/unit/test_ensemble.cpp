#include <doctest.h>

#include <cmath>
#include <random>

#include "datscore/ensemble.hpp"
#include "datscore/error.hpp"
#include "support.hpp"

using namespace datscore;
using namespace datscore::ensemble;
using cohort::Stratum;
using featsel::Modality;

namespace {

struct World {
  harmonize::WScoreTable w;
  std::vector<std::string> neg, pos, other;
};

World make_world(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  World wd;
  wd.w.roi_names = {"a", "b", "c"};
  const int n = 70;
  wd.w.scores.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    const auto id = "s" + std::to_string(100 + i);
    wd.w.subject_ids.push_back(id);
    wd.w.missing.push_back(i == n - 1);
    const double shift = i < 30 ? 0.0 : (i < 60 ? -1.5 : -0.7);
    for (int j = 0; j < 3; ++j) wd.w.scores(i, j) = z(rng) + (j < 2 ? shift : 0.0);
    (i < 30 ? wd.neg : i < 60 ? wd.pos : wd.other).push_back(id);
  }
  wd.w.scores.row(n - 1).setConstant(std::nan(""));
  return wd;
}

std::vector<Subject> training(const World& wd) {
  std::vector<Subject> s;
  for (const auto& id : wd.neg) s.push_back({id, Stratum::sNC});
  for (const auto& id : wd.pos) s.push_back({id, Stratum::sDAT});
  return s;
}

featsel::FeatureSet roi_set() {
  const std::vector<std::string> ids{"roi:a", "roi:b", "roi:c"};
  return featsel::fixed_feature_set(ids, Modality::mri);
}

}  // namespace

TEST_CASE("out-of-bag scores average exactly the members that did not see the subject") {
  const auto wd = make_world(1);
  const FeatureSource src(nullptr, &wd.w);
  const auto plan = featsel::make_subbag_plan(wd.neg, wd.pos, 5, 0.8, 3);
  const auto model = train_ensemble(src, roi_set(), plan, mkl::MklConfig{});
  REQUIRE(model.members.size() == 5);
  for (std::size_t m = 0; m < 5; ++m) {
    auto expect = plan.subsets[m].negative;
    expect.insert(expect.end(), plan.subsets[m].positive.begin(), plan.subsets[m].positive.end());
    CHECK(model.members[m].training_subjects == expect);
  }

  const auto subjects = training(wd);
  const auto table = score_oob(model, src, subjects);
  REQUIRE(table.rows.size() == subjects.size());
  const std::vector<std::string> fids{"roi:a", "roi:b", "roi:c"};
  double total_members = 0;
  for (const auto& r : table.rows) {
    double sum = 0;
    std::size_t count = 0;
    const std::vector<std::string> one{r.subject_id};
    for (std::size_t m = 0; m < 5; ++m) {
      const auto& bag = plan.subsets[m];
      if (std::binary_search(bag.negative.begin(), bag.negative.end(), r.subject_id) ||
          std::binary_search(bag.positive.begin(), bag.positive.end(), r.subject_id))
        continue;
      sum += mkl::predict_proba(model.members[m], src.rows(one, fids))(0);
      ++count;
    }
    CHECK(r.n_members == count);
    total_members += static_cast<double>(count);
    if (count == 0) {
      CHECK(r.status == ScoreStatus::unscorable);
      CHECK(std::isnan(r.score));
    } else {
      CHECK(r.status == ScoreStatus::scored);
      CHECK(r.score == doctest::Approx(sum / static_cast<double>(count)).epsilon(1e-12));
      CHECK(r.score >= 0.0);
      CHECK(r.score <= 1.0);
    }
  }
  // 24 of 30 per class are drawn per subset, so on average F * 6/30 = 1 member per subject.
  CHECK(total_members / static_cast<double>(subjects.size()) == doctest::Approx(1.0));
}

TEST_CASE("unseen subjects use every member; missing data is reported, not scored") {
  const auto wd = make_world(2);
  const FeatureSource src(nullptr, &wd.w);
  const auto plan = featsel::make_subbag_plan(wd.neg, wd.pos, 4, 0.8, 5);
  const auto model = train_ensemble(src, roi_set(), plan, mkl::MklConfig{});
  std::vector<Subject> others;
  for (const auto& id : wd.other) others.push_back({id, Stratum::pMCI});
  others.push_back({"nobody", Stratum::sMCI});
  const auto t = score_unseen(model, src, others);
  for (std::size_t i = 0; i + 2 < t.rows.size(); ++i) {
    CHECK(t.rows[i].n_members == 4);
    CHECK(t.rows[i].status == ScoreStatus::scored);
  }
  CHECK(t.rows[t.rows.size() - 2].status == ScoreStatus::missing_modality);  // NaN w-scores
  CHECK(t.rows.back().status == ScoreStatus::missing_modality);
  // The shifted group leans towards DAT+.
  double mean = 0;
  for (std::size_t i = 0; i < 9; ++i) mean += t.rows[i].score / 9.0;
  CHECK(mean > 0.5);

  const auto full = featsel::make_subbag_plan(wd.neg, wd.pos, 2, 1.0, 5);
  const auto all_in = train_ensemble(src, roi_set(), full, mkl::MklConfig{});
  for (const auto& r : score_oob(all_in, src, training(wd)).rows) CHECK(r.status == ScoreStatus::unscorable);
  CHECK_THROWS_AS(train_ensemble(src, featsel::FeatureSet{}, plan, mkl::MklConfig{}), ValidationError);
}

TEST_CASE("threshold rule: a score equal to the threshold is DAT+") {
  DatScoreTable t;
  for (double s : {0.4999, 0.5, 0.9, 0.1}) t.rows.push_back({"x", Stratum::sMCI, s, 3, {}, ScoreStatus::scored});
  t.rows.push_back({"y", Stratum::sMCI, std::nan(""), 0, {}, ScoreStatus::unscorable});
  const auto l = threshold_labels(t, 0.5);
  CHECK(l.rows[0].predicted == cohort::Trajectory::DAT_minus);
  CHECK(l.rows[1].predicted == cohort::Trajectory::DAT_plus);
  CHECK(l.rows[2].predicted == cohort::Trajectory::DAT_plus);
  CHECK(l.rows[4].predicted == cohort::Trajectory::DAT_minus);
  std::size_t prev = 10;
  for (int k = 0; k <= 20; ++k) {
    std::size_t plus = 0;
    for (const auto& r : threshold_labels(t, k / 20.0).rows) plus += r.predicted == cohort::Trajectory::DAT_plus;
    CHECK(plus <= prev);
    prev = plus;
  }
  CHECK_THROWS_AS(threshold_labels(t, 1.5), ValidationError);
}

TEST_CASE("score tables round-trip through CSV") {
  testing::TempDir dir("ens");
  DatScoreTable t;
  t.modality = Modality::combined;
  t.rows.push_back({"a", Stratum::pNC, 0.123456789012345, 10, {}, ScoreStatus::scored});
  t.rows.push_back({"b", std::nullopt, 0.5, 10, {}, ScoreStatus::scored});
  t.rows.push_back({"c", Stratum::sNC, std::nan(""), 0, {}, ScoreStatus::unscorable});
  t.rows.push_back({"d", Stratum::eDAT, std::nan(""), 0, {}, ScoreStatus::missing_modality});
  t = threshold_labels(t, 0.5);
  write_scores_csv(t, dir / "s.csv");
  const auto back = read_scores_csv(dir / "s.csv");
  CHECK(back.modality == Modality::combined);
  REQUIRE(back.rows.size() == 4);
  CHECK(back.rows[0].score == t.rows[0].score);
  CHECK(back.rows[0].stratum == Stratum::pNC);
  CHECK_FALSE(back.rows[1].stratum.has_value());
  CHECK(back.rows[1].predicted == cohort::Trajectory::DAT_plus);
  CHECK(back.rows[2].status == ScoreStatus::unscorable);
  CHECK(back.rows[3].status == ScoreStatus::missing_modality);
  write_scores_csv(back, dir / "s2.csv");
  CHECK(testing::read_text(dir / "s.csv") == testing::read_text(dir / "s2.csv"));
}
