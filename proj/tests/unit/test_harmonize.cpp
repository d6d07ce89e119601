#include <doctest.h>

#include <cmath>
#include <random>

#include "datscore/error.hpp"
#include "datscore/harmonize.hpp"
#include "oracles/linear.hpp"
#include "support.hpp"

using namespace datscore;
using namespace datscore::harmonize;

namespace {

struct Fixture {
  RoiVolumeTable volumes;
  cohort::CovariateTable covariates;
  std::vector<std::string> reference;
};

Fixture make_fixture(std::uint64_t seed, std::size_t n = 80, std::size_t rois = 5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  Fixture f;
  for (std::size_t r = 0; r < rois; ++r) f.volumes.roi_names.push_back("roi" + std::to_string(r));
  f.volumes.volumes.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(rois));
  const char* scanners[] = {"GE", "Philips", "Siemens"};
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = "s" + std::to_string(1000 + i);
    f.volumes.subject_ids.push_back(id);
    cohort::Covariates c;
    c.age = 70;
    c.sex = i % 2 ? "M" : "F";
    c.field_strength = i % 3 ? "1.5T" : "3T";
    c.scanner = scanners[rng() % 3];
    c.tiv = 1.45e6 + 1e5 * z(rng);
    f.covariates[id] = c;
    for (std::size_t r = 0; r < rois; ++r)
      f.volumes.volumes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) =
          4000.0 + 100.0 * r + 0.002 * (c.tiv - 1.45e6) + (c.sex == "M" ? 150.0 : 0.0) +
          (c.scanner == "GE" ? -80.0 : 40.0) + 120.0 * z(rng);
    if (i < n * 3 / 4) f.reference.push_back(id);
  }
  return f;
}

Eigen::RowVectorXd oracle_row(const cohort::Covariates& c) {
  Eigen::RowVectorXd r(6);
  r << 1.0, c.sex == "M", c.field_strength == "3T", c.scanner == "Philips", c.scanner == "Siemens", c.tiv;
  return r;
}

}  // namespace

TEST_CASE("GLM coefficients and w-scores match a dense least-squares oracle") {
  const auto f = make_fixture(1);
  const auto model = fit_glm(f.volumes, f.covariates, f.reference);
  CHECK(model.design_columns == std::vector<std::string>{"intercept", "sex[M]", "field_strength[3T]",
                                                         "scanner[Philips]", "scanner[Siemens]", "tiv"});
  const auto n = static_cast<Eigen::Index>(f.reference.size());
  Eigen::MatrixXd x(n, 6), y(n, f.volumes.volumes.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = oracle_row(f.covariates.at(f.reference[static_cast<std::size_t>(i)]));
    y.row(i) = f.volumes.volumes.row(i);
  }
  const Eigen::MatrixXd b = oracle::ols(x, y);
  CHECK((model.coefficients - b).cwiseAbs().maxCoeff() <= 1e-6 * b.cwiseAbs().maxCoeff());

  const Eigen::MatrixXd resid = y - x * b;
  const auto w = compute_wscores(f.volumes, f.covariates, model);
  for (Eigen::Index r = 0; r < y.cols(); ++r) {
    const double sd = std::sqrt(resid.col(r).squaredNorm() / static_cast<double>(n - 6));
    CHECK(model.residual_sd(r) == doctest::Approx(sd).epsilon(1e-9));
    for (Eigen::Index i = 0; i < f.volumes.volumes.rows(); ++i) {
      const auto& c = f.covariates.at(f.volumes.subject_ids[static_cast<std::size_t>(i)]);
      const double expect = (f.volumes.volumes(i, r) - oracle_row(c).dot(b.col(r))) / sd;
      CHECK(std::abs(w.scores(i, r) - expect) < 1e-7);
    }
    // Reference-group w-scores have unit variance on n - p degrees of freedom.
    CHECK(w.scores.col(r).head(n).squaredNorm() / static_cast<double>(n - 6) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(w.scores.col(r).head(n).sum()) < 1e-8);
  }
}

TEST_CASE("rank deficiency names the collinear columns") {
  auto f = make_fixture(2);
  for (const auto& id : f.reference) f.covariates[id].field_strength = f.covariates[id].sex == "M" ? "3T" : "1.5T";
  try {
    fit_glm(f.volumes, f.covariates, f.reference);
    FAIL("expected a ValidationError");
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    CHECK(what.find("collinear") != std::string::npos);
    const bool named = what.find("sex[M]") != std::string::npos || what.find("field_strength[3T]") != std::string::npos;
    CHECK(named);
  }
}

TEST_CASE("unseen levels and missing covariates flag the subject") {
  auto f = make_fixture(3);
  const auto model = fit_glm(f.volumes, f.covariates, f.reference);
  f.covariates[f.volumes.subject_ids.back()].scanner = "Toshiba";
  f.covariates.erase(f.volumes.subject_ids[f.volumes.subject_ids.size() - 2]);
  const auto w = compute_wscores(f.volumes, f.covariates, model);
  CHECK(w.missing.back());
  CHECK(w.missing[w.missing.size() - 2]);
  CHECK(std::isnan(w.scores(w.scores.rows() - 1, 0)));
  CHECK_FALSE(w.missing.front());
}

TEST_CASE("intercept-only design reduces to a z-score against the reference group") {
  const auto f = make_fixture(4);
  const auto model = fit_glm(f.volumes, f.covariates, f.reference, DesignSpec::intercept_only());
  CHECK(model.design_columns == std::vector<std::string>{"intercept"});
  const auto n = static_cast<Eigen::Index>(f.reference.size());
  const double mean = f.volumes.volumes.col(0).head(n).mean();
  CHECK(model.coefficients(0, 0) == doctest::Approx(mean));
}

TEST_CASE("a constant ROI fails with a numerical error") {
  auto f = make_fixture(5);
  f.volumes.volumes.col(2).setConstant(1234.0);
  CHECK_THROWS_AS(fit_glm(f.volumes, f.covariates, f.reference, DesignSpec::intercept_only()), NumericalError);
}

TEST_CASE("volume and w-score CSV round trips") {
  testing::TempDir dir("harm");
  const auto f = make_fixture(6, 20, 3);
  write_volumes_csv(f.volumes, dir / "v.csv");
  const auto v = read_volumes_csv(dir / "v.csv");
  CHECK(v.roi_names == f.volumes.roi_names);
  CHECK(v.volumes == f.volumes.volumes);

  auto cov = f.covariates;
  cov.erase(f.volumes.subject_ids[0]);
  const auto model = fit_glm(f.volumes, f.covariates, f.reference, DesignSpec::intercept_only());
  const auto w = compute_wscores(f.volumes, cov, model);
  write_wscores_csv(w, dir / "w.csv");
  const auto wb = read_wscores_csv(dir / "w.csv");
  CHECK(wb.missing == w.missing);
  CHECK(wb.scores.bottomRows(19) == w.scores.bottomRows(19));
  CHECK(wb.row_of(f.volumes.subject_ids[3]) == 3);

  auto bad = f.volumes;
  bad.volumes(0, 0) = -1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}
