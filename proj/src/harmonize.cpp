#include "datscore/harmonize.hpp"

#include <Eigen/QR>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <unordered_map>

#include "datscore/csv.hpp"
#include "datscore/error.hpp"

namespace datscore::harmonize {
namespace {

std::vector<std::string> levels_of(const cohort::CovariateTable& cov,
                                   std::span<const std::string> ids,
                                   std::string cohort::Covariates::*field) {
  std::set<std::string> s;
  for (const auto& id : ids) s.insert(cov.at(id).*field);
  return {s.begin(), s.end()};
}

std::vector<std::string> design_columns(const GlmModel& m) {
  std::vector<std::string> cols{"intercept"};
  auto add = [&](bool on, const char* name, const std::vector<std::string>& levels) {
    if (!on) return;
    for (std::size_t i = 1; i < levels.size(); ++i) cols.push_back(fmt::format("{}[{}]", name, levels[i]));
  };
  add(m.design.sex, "sex", m.sex_levels);
  add(m.design.field_strength, "field_strength", m.field_strength_levels);
  add(m.design.scanner, "scanner", m.scanner_levels);
  if (m.design.tiv) cols.emplace_back("tiv");
  return cols;
}

// Design row for one subject; nullopt when a categorical level was not seen at fit time.
std::optional<Eigen::RowVectorXd> design_row(const GlmModel& m, const cohort::Covariates& c) {
  Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(m.design_columns.size()));
  Eigen::Index k = 0;
  row(k++) = 1.0;
  auto one_hot = [&](bool on, const std::vector<std::string>& levels, const std::string& value) {
    if (!on) return true;
    const auto it = std::find(levels.begin(), levels.end(), value);
    if (it == levels.end()) return false;
    const auto idx = it - levels.begin();
    for (std::size_t i = 1; i < levels.size(); ++i) row(k++) = (idx == static_cast<long>(i)) ? 1.0 : 0.0;
    return true;
  };
  if (!one_hot(m.design.sex, m.sex_levels, c.sex)) return std::nullopt;
  if (!one_hot(m.design.field_strength, m.field_strength_levels, c.field_strength)) return std::nullopt;
  if (!one_hot(m.design.scanner, m.scanner_levels, c.scanner)) return std::nullopt;
  if (m.design.tiv) {
    if (!std::isfinite(c.tiv)) return std::nullopt;
    row(k++) = c.tiv;
  }
  return row;
}

}  // namespace

void RoiVolumeTable::validate() const {
  if (static_cast<std::size_t>(volumes.rows()) != subject_ids.size() ||
      static_cast<std::size_t>(volumes.cols()) != roi_names.size())
    throw ValidationError("volume table shape does not match its ids");
  for (Eigen::Index j = 0; j < volumes.cols(); ++j)
    for (Eigen::Index i = 0; i < volumes.rows(); ++i)
      if (!(std::isfinite(volumes(i, j)) && volumes(i, j) > 0.0))
        throw ValidationError(fmt::format("volume for subject '{}' ROI '{}' is not positive: {}",
                                          subject_ids[i], roi_names[j], volumes(i, j)));
}

RoiVolumeTable read_volumes_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const auto c_id = t.column("subject_id");
  RoiVolumeTable out;
  std::vector<std::size_t> roi_cols;
  for (std::size_t j = 0; j < t.header.size(); ++j)
    if (j != c_id) {
      out.roi_names.push_back(t.header[j]);
      roi_cols.push_back(j);
    }
  out.volumes.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(roi_cols.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    out.subject_ids.push_back(t.rows[i][c_id]);
    for (std::size_t j = 0; j < roi_cols.size(); ++j)
      out.volumes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          csv::parse_double(t.rows[i][roi_cols[j]], t.source);
  }
  out.validate();
  return out;
}

void write_volumes_csv(const RoiVolumeTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << "subject_id";
  for (const auto& r : table.roi_names) out << ',' << r;
  out << '\n';
  for (Eigen::Index i = 0; i < table.volumes.rows(); ++i) {
    out << table.subject_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < table.volumes.cols(); ++j) out << ',' << csv::format_double(table.volumes(i, j));
    out << '\n';
  }
}

GlmModel fit_glm(const RoiVolumeTable& volumes, const cohort::CovariateTable& covariates,
                 std::span<const std::string> reference, const DesignSpec& design) {
  volumes.validate();
  std::unordered_map<std::string, Eigen::Index> row_of;
  for (std::size_t i = 0; i < volumes.subject_ids.size(); ++i)
    row_of.emplace(volumes.subject_ids[i], static_cast<Eigen::Index>(i));

  std::vector<std::string> ref;
  for (const auto& id : reference) {
    if (!row_of.count(id))
      throw ValidationError(fmt::format("reference subject '{}' has no volumes", id));
    if (!covariates.count(id))
      throw ValidationError(fmt::format("reference subject '{}' has no covariates", id));
    ref.push_back(id);
  }

  GlmModel m;
  m.design = design;
  m.roi_names = volumes.roi_names;
  m.reference_subjects = ref;
  if (design.sex) m.sex_levels = levels_of(covariates, ref, &cohort::Covariates::sex);
  if (design.field_strength)
    m.field_strength_levels = levels_of(covariates, ref, &cohort::Covariates::field_strength);
  if (design.scanner) m.scanner_levels = levels_of(covariates, ref, &cohort::Covariates::scanner);
  m.design_columns = design_columns(m);

  const auto n = static_cast<Eigen::Index>(ref.size());
  const auto p = static_cast<Eigen::Index>(m.design_columns.size());
  if (n <= p)
    throw ValidationError(fmt::format("reference group has {} subjects for {} coefficients", n, p));

  Eigen::MatrixXd X(n, p);
  Eigen::MatrixXd Y(n, volumes.volumes.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& id = ref[static_cast<std::size_t>(i)];
    auto row = design_row(m, covariates.at(id));
    if (!row) throw ValidationError(fmt::format("reference subject '{}' has an invalid covariate", id));
    X.row(i) = *row;
    Y.row(i) = volumes.volumes.row(row_of.at(id));
  }

  // Column scaling keeps the rank decision independent of covariate units.
  Eigen::VectorXd scale = X.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < p; ++j)
    if (scale(j) == 0.0) scale(j) = 1.0;
  const Eigen::MatrixXd Xs = X * scale.cwiseInverse().asDiagonal();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    std::vector<std::string> collinear;
    for (Eigen::Index k = qr.rank(); k < p; ++k)
      collinear.push_back(m.design_columns[static_cast<std::size_t>(qr.colsPermutation().indices()(k))]);
    throw ValidationError(fmt::format("rank-deficient design; collinear columns: {}",
                                      fmt::join(collinear, ", ")));
  }
  m.coefficients = scale.cwiseInverse().asDiagonal() * qr.solve(Y);
  const Eigen::MatrixXd resid = Y - X * m.coefficients;
  m.residual_sd = (resid.colwise().squaredNorm() / static_cast<double>(n - p)).cwiseSqrt().transpose();
  for (Eigen::Index j = 0; j < m.residual_sd.size(); ++j) {
    const double level = Y.col(j).cwiseAbs().maxCoeff();
    if (!std::isfinite(m.residual_sd(j)) || m.residual_sd(j) <= 1e-10 * level)
      throw NumericalError(fmt::format("ROI '{}': residual sd {} underflows; the covariates explain "
                                       "the volumes exactly",
                                       m.roi_names[static_cast<std::size_t>(j)], m.residual_sd(j)));
  }
  return m;
}

std::size_t WScoreTable::row_of(const std::string& id) const {
  const auto it = std::find(subject_ids.begin(), subject_ids.end(), id);
  return it == subject_ids.end() ? std::string::npos : static_cast<std::size_t>(it - subject_ids.begin());
}

WScoreTable compute_wscores(const RoiVolumeTable& volumes, const cohort::CovariateTable& covariates,
                            const GlmModel& model) {
  volumes.validate();
  if (volumes.roi_names != model.roi_names)
    throw ValidationError("volume table ROIs do not match the fitted model");
  WScoreTable w;
  w.subject_ids = volumes.subject_ids;
  w.roi_names = volumes.roi_names;
  w.scores.resize(volumes.volumes.rows(), volumes.volumes.cols());
  w.missing.assign(volumes.subject_ids.size(), false);
  const Eigen::RowVectorXd inv_sd = model.residual_sd.cwiseInverse().transpose();
  for (Eigen::Index i = 0; i < volumes.volumes.rows(); ++i) {
    const auto it = covariates.find(volumes.subject_ids[static_cast<std::size_t>(i)]);
    std::optional<Eigen::RowVectorXd> row;
    if (it != covariates.end()) row = design_row(model, it->second);
    if (!row) {
      w.missing[static_cast<std::size_t>(i)] = true;
      w.scores.row(i).setConstant(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    w.scores.row(i) = (volumes.volumes.row(i) - *row * model.coefficients).cwiseProduct(inv_sd);
  }
  return w;
}

void write_wscores_csv(const WScoreTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << "subject_id";
  for (const auto& r : table.roi_names) out << ',' << r;
  out << '\n';
  for (Eigen::Index i = 0; i < table.scores.rows(); ++i) {
    out << table.subject_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < table.scores.cols(); ++j) {
      out << ',';
      if (table.missing[static_cast<std::size_t>(i)]) out << "NA";
      else out << csv::format_double(table.scores(i, j));
    }
    out << '\n';
  }
}

WScoreTable read_wscores_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const auto c_id = t.column("subject_id");
  WScoreTable w;
  std::vector<std::size_t> cols;
  for (std::size_t j = 0; j < t.header.size(); ++j)
    if (j != c_id) {
      w.roi_names.push_back(t.header[j]);
      cols.push_back(j);
    }
  w.scores.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    w.subject_ids.push_back(t.rows[i][c_id]);
    const bool na = !cols.empty() && t.rows[i][cols[0]] == "NA";
    w.missing.push_back(na);
    for (std::size_t j = 0; j < cols.size(); ++j)
      w.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          na ? std::numeric_limits<double>::quiet_NaN() : csv::parse_double(t.rows[i][cols[j]], t.source);
  }
  return w;
}

}  // namespace datscore::harmonize
