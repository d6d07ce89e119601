#include <doctest.h>

#include "datscore/cohort.hpp"
#include "datscore/error.hpp"
#include "datscore/synth.hpp"
#include "support.hpp"

using namespace datscore;
using namespace datscore::cohort;
using D = Diagnosis;

namespace {

DiagnosisTimeline tl(std::vector<Visit> v, std::string id = "x") { return {std::move(id), std::move(v)}; }

}  // namespace

TEST_CASE("the seven strata") {
  CHECK(stratify(tl({{0, D::NC, true}, {12, D::NC, true}})).stratum == Stratum::sNC);
  CHECK(stratify(tl({{0, D::NC, true}, {12, D::MCI, true}})).stratum == Stratum::uNC);
  CHECK(stratify(tl({{0, D::NC, true}, {12, D::MCI, true}, {24, D::DAT, true}})).stratum == Stratum::pNC);
  CHECK(stratify(tl({{0, D::MCI, true}, {24, D::MCI, true}})).stratum == Stratum::sMCI);
  CHECK(stratify(tl({{0, D::MCI, true}, {24, D::DAT, true}})).stratum == Stratum::pMCI);
  CHECK(stratify(tl({{-3, D::MCI, false}, {0, D::DAT, true}})).stratum == Stratum::eDAT);
  CHECK(stratify(tl({{-3, D::DAT, false}, {0, D::DAT, true}})).stratum == Stratum::sDAT);
  CHECK(stratify(tl({{0, D::DAT, true}})).stratum == Stratum::sDAT);
}

TEST_CASE("trajectories follow the strata") {
  for (auto s : {Stratum::sNC, Stratum::uNC, Stratum::sMCI}) CHECK(trajectory_of(s) == Trajectory::DAT_minus);
  for (auto s : {Stratum::pNC, Stratum::pMCI, Stratum::eDAT, Stratum::sDAT})
    CHECK(trajectory_of(s) == Trajectory::DAT_plus);
}

TEST_CASE("visit order does not matter and the baseline is the first imaging visit") {
  const auto a = stratify(tl({{24, D::DAT, true}, {0, D::MCI, true}, {-3, D::NC, false}}));
  CHECK(a.stratum == Stratum::pMCI);
  // A non-imaging DAT visit before the imaging baseline is still a DAT diagnosis.
  CHECK(stratify(tl({{0, D::MCI, false}, {6, D::DAT, true}})).stratum == Stratum::eDAT);
}

TEST_CASE("invalid timelines") {
  CHECK_THROWS_AS(stratify(tl({{0, D::NC, false}})), ValidationError);
  CHECK_THROWS_AS(stratify(tl({{0, D::NC, true}, {0, D::MCI, true}})), ValidationError);
  CHECK_THROWS_AS(stratify(tl({{0, D::DAT, true}, {12, D::MCI, true}})), ValidationError);
}

TEST_CASE("Table 1 shaped timelines give the exact group counts") {
  auto cfg = synth::SynthConfig::defaults();
  cfg.n_snps = 20;
  cfg.n_causal_snps = 2;
  const auto data = synth::generate(cfg);
  std::map<Stratum, std::size_t> counts;
  for (const auto& t : data.timelines) ++counts[stratify(t).stratum];
  const std::map<Stratum, std::size_t> expect{{Stratum::sNC, 109}, {Stratum::uNC, 22},  {Stratum::pNC, 14},
                                              {Stratum::sMCI, 101}, {Stratum::pMCI, 155}, {Stratum::eDAT, 4},
                                              {Stratum::sDAT, 138}};
  CHECK(counts == expect);
}

TEST_CASE("cohort join and CSV round trips") {
  testing::TempDir dir("cohort");
  const std::vector<DiagnosisTimeline> tls{tl({{0, D::NC, true}}, "a"), tl({{0, D::DAT, true}}, "b"),
                                           tl({{-3, D::MCI, false}, {0, D::MCI, true}}, "c")};
  write_timelines_csv(tls, dir / "t.csv");
  const auto back = read_timelines_csv(dir / "t.csv");
  REQUIRE(back.size() == 3);
  CHECK(back[2].visits.size() == 2);
  CHECK(stratify(back[2]).stratum == Stratum::sMCI);

  CovariateTable cov{{"a", {70.0, "F", "1.5T", "S1", 1.4e6}}, {"b", {75.5, "M", "3T", "S2", 1.5e6}}};
  write_covariates_csv(cov, dir / "c.csv");
  const auto cb = read_covariates_csv(dir / "c.csv");
  CHECK(cb.at("b").tiv == 1.5e6);
  CHECK(cb.at("a").scanner == "S1");

  const std::vector<std::string> geno{"a", "b"}, mri{"b", "c"};
  const auto c = build_cohort(back, cb, geno, mri);
  CHECK(c.subjects.size() == 3);
  CHECK(c.training_eligible_count() == 1);
  CHECK(c.ids_in(Stratum::sDAT, true) == std::vector<std::string>{"b"});
  CHECK(c.ids_in(Stratum::sNC, true).empty());
  CHECK(c.find("a")->genotype_row.has_value());
  CHECK_FALSE(c.find("a")->mri_row.has_value());
  CHECK_FALSE(c.find("c")->covariates.has_value());
}
