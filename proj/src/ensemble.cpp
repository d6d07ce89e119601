#include "datscore/ensemble.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "datscore/csv.hpp"
#include "datscore/error.hpp"

namespace datscore::ensemble {

using featsel::Modality;

FeatureSource::FeatureSource(const plink::RecodedGenotypes* genotypes,
                             const harmonize::WScoreTable* wscores)
    : genotypes_(genotypes), wscores_(wscores) {
  if (genotypes_) {
    for (std::size_t i = 0; i < genotypes_->subject_ids.size(); ++i) geno_rows_.emplace(genotypes_->subject_ids[i], i);
    for (std::size_t j = 0; j < genotypes_->feature_ids.size(); ++j)
      geno_cols_.emplace(featsel::snp_feature_id(genotypes_->feature_ids[j]), j);
  }
  if (wscores_) {
    for (std::size_t i = 0; i < wscores_->subject_ids.size(); ++i)
      if (!wscores_->missing[i]) w_rows_.emplace(wscores_->subject_ids[i], i);
    for (std::size_t j = 0; j < wscores_->roi_names.size(); ++j)
      w_cols_.emplace(featsel::roi_feature_id(wscores_->roi_names[j]), j);
  }
}

std::optional<std::size_t> FeatureSource::genotype_row(const std::string& s) const {
  if (auto it = geno_rows_.find(s); it != geno_rows_.end()) return it->second;
  return std::nullopt;
}

std::optional<std::size_t> FeatureSource::wscore_row(const std::string& s) const {
  if (auto it = w_rows_.find(s); it != w_rows_.end()) return it->second;
  return std::nullopt;
}

bool FeatureSource::has(const std::string& subject, Modality modality) const {
  switch (modality) {
    case Modality::genetic: return geno_rows_.count(subject) > 0;
    case Modality::mri: return w_rows_.count(subject) > 0;
    case Modality::combined: return geno_rows_.count(subject) > 0 && w_rows_.count(subject) > 0;
  }
  return false;
}

bool FeatureSource::covers(const std::string& subject, std::span<const std::string> feature_ids) const {
  bool need_g = false, need_m = false;
  for (const auto& id : feature_ids) (featsel::modality_of(id) == Modality::genetic ? need_g : need_m) = true;
  return (!need_g || has(subject, Modality::genetic)) && (!need_m || has(subject, Modality::mri));
}

Eigen::MatrixXd FeatureSource::rows(std::span<const std::string> subjects,
                                    std::span<const std::string> feature_ids) const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(subjects.size()), static_cast<Eigen::Index>(feature_ids.size()));
  for (std::size_t j = 0; j < feature_ids.size(); ++j) {
    const auto& id = feature_ids[j];
    const bool genetic = featsel::modality_of(id) == Modality::genetic;
    const auto& cols = genetic ? geno_cols_ : w_cols_;
    const auto c = cols.find(id);
    if (c == cols.end()) throw ValidationError(fmt::format("feature '{}' is not in the input data", id));
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      const auto& rows = genetic ? geno_rows_ : w_rows_;
      const auto r = rows.find(subjects[i]);
      if (r == rows.end())
        throw ValidationError(fmt::format("subject '{}' has no {} data", subjects[i], genetic ? "genotype" : "MRI"));
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          genetic ? static_cast<double>(genotypes_->values(static_cast<Eigen::Index>(r->second),
                                                           static_cast<Eigen::Index>(c->second)))
                  : wscores_->scores(static_cast<Eigen::Index>(r->second), static_cast<Eigen::Index>(c->second));
    }
  }
  return x;
}

std::vector<std::string> FeatureSource::feature_ids(Modality modality) const {
  std::vector<std::string> ids;
  if ((modality == Modality::genetic || modality == Modality::combined) && genotypes_)
    for (const auto& f : genotypes_->feature_ids) ids.push_back(featsel::snp_feature_id(f));
  if ((modality == Modality::mri || modality == Modality::combined) && wscores_)
    for (const auto& r : wscores_->roi_names) ids.push_back(featsel::roi_feature_id(r));
  return ids;
}

EnsembleModel train_ensemble(const FeatureSource& source, const featsel::FeatureSet& features,
                             const featsel::SubBagPlan& plan, const mkl::MklConfig& config) {
  if (features.features.empty()) throw ValidationError("cannot train on an empty feature set");
  EnsembleModel model;
  model.modality = features.modality;
  model.feature_set = features;
  model.plan = plan;
  const auto ids = features.ids();
  for (const auto& bag : plan.subsets) {
    if (bag.negative.empty() || bag.positive.empty())
      throw ValidationError("a training subset lacks one of the classes");
    std::vector<std::string> subjects = bag.negative;
    subjects.insert(subjects.end(), bag.positive.begin(), bag.positive.end());
    Eigen::VectorXd y(static_cast<Eigen::Index>(subjects.size()));
    for (std::size_t i = 0; i < subjects.size(); ++i)
      y(static_cast<Eigen::Index>(i)) = i < bag.negative.size() ? -1.0 : 1.0;
    model.members.push_back(mkl::fit_model(source.rows(subjects, ids), ids, subjects, y, config));
  }
  return model;
}

const char* to_string(ScoreStatus s) {
  switch (s) {
    case ScoreStatus::scored: return "scored";
    case ScoreStatus::unscorable: return "unscorable";
    case ScoreStatus::missing_modality: return "missing_modality";
  }
  return "?";
}

std::vector<const DatScore*> DatScoreTable::scored() const {
  std::vector<const DatScore*> v;
  for (const auto& r : rows)
    if (r.status == ScoreStatus::scored) v.push_back(&r);
  return v;
}

namespace {

DatScoreTable score_with(const EnsembleModel& model, const FeatureSource& source,
                         std::span<const Subject> subjects, double threshold, bool out_of_bag) {
  DatScoreTable table;
  table.modality = model.modality;
  table.threshold = threshold;
  const auto ids = model.feature_set.ids();
  std::vector<double> sum(subjects.size(), 0.0);
  std::vector<std::size_t> count(subjects.size(), 0);

  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < subjects.size(); ++i)
    if (source.covers(subjects[i].id, ids)) usable.push_back(i);

  for (std::size_t m = 0; m < model.members.size(); ++m) {
    std::vector<std::size_t> idx;
    for (auto i : usable) {
      if (out_of_bag) {
        const auto& bag = model.plan.subsets[m];
        const auto& id = subjects[i].id;
        if (std::binary_search(bag.negative.begin(), bag.negative.end(), id) ||
            std::binary_search(bag.positive.begin(), bag.positive.end(), id))
          continue;
      }
      idx.push_back(i);
    }
    if (idx.empty()) continue;
    std::vector<std::string> batch;
    for (auto i : idx) batch.push_back(subjects[i].id);
    const Eigen::VectorXd p = mkl::predict_proba(model.members[m], source.rows(batch, ids));
    for (std::size_t b = 0; b < idx.size(); ++b) {
      sum[idx[b]] += p(static_cast<Eigen::Index>(b));
      ++count[idx[b]];
    }
  }

  const std::set<std::size_t> usable_set(usable.begin(), usable.end());
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    DatScore row;
    row.subject_id = subjects[i].id;
    row.stratum = subjects[i].stratum;
    row.n_members = count[i];
    if (!usable_set.count(i)) {
      row.status = ScoreStatus::missing_modality;
      row.score = std::numeric_limits<double>::quiet_NaN();
    } else if (count[i] == 0) {
      row.status = ScoreStatus::unscorable;
      row.score = std::numeric_limits<double>::quiet_NaN();
    } else {
      row.score = sum[i] / static_cast<double>(count[i]);
    }
    table.rows.push_back(row);
  }
  return threshold_labels(std::move(table), threshold);
}

}  // namespace

DatScoreTable score_oob(const EnsembleModel& model, const FeatureSource& source,
                        std::span<const Subject> training_subjects, double threshold) {
  return score_with(model, source, training_subjects, threshold, true);
}

DatScoreTable score_unseen(const EnsembleModel& model, const FeatureSource& source,
                           std::span<const Subject> subjects, double threshold) {
  return score_with(model, source, subjects, threshold, false);
}

DatScoreTable threshold_labels(DatScoreTable table, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw ValidationError(fmt::format("threshold {} is outside [0, 1]", threshold));
  table.threshold = threshold;
  for (auto& r : table.rows)
    r.predicted = (r.status == ScoreStatus::scored && r.score >= threshold) ? cohort::Trajectory::DAT_plus
                                                                            : cohort::Trajectory::DAT_minus;
  return table;
}

void write_scores_csv(const DatScoreTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  write_scores_csv(table, out);
}

void write_scores_csv(const DatScoreTable& table, std::ostream& out) {
  out << "subject_id,stratum,modality,score,n_members,predicted,status\n";
  for (const auto& r : table.rows) {
    const bool ok = r.status == ScoreStatus::scored;
    out << fmt::format("{},{},{},{},{},{},{}\n", r.subject_id, r.stratum ? cohort::to_string(*r.stratum) : "NA",
                       featsel::to_string(table.modality), ok ? csv::format_double(r.score) : "NA",
                       r.n_members, ok ? cohort::to_string(r.predicted) : "NA", to_string(r.status));
  }
}

DatScoreTable read_scores_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const auto c_id = t.column("subject_id"), c_st = t.column("stratum"), c_mod = t.column("modality"),
             c_score = t.column("score"), c_n = t.column("n_members"), c_status = t.column("status");
  DatScoreTable table;
  for (const auto& row : t.rows) {
    table.modality = featsel::parse_modality(row[c_mod]);
    DatScore r;
    r.subject_id = row[c_id];
    if (row[c_st] != "NA") r.stratum = cohort::parse_stratum(row[c_st]);
    r.n_members = static_cast<std::size_t>(csv::parse_int(row[c_n], t.source));
    const auto& st = row[c_status];
    if (st == "scored") r.status = ScoreStatus::scored;
    else if (st == "unscorable") r.status = ScoreStatus::unscorable;
    else if (st == "missing_modality") r.status = ScoreStatus::missing_modality;
    else throw ValidationError(fmt::format("{}: unknown status '{}'", t.source, st));
    r.score = r.status == ScoreStatus::scored ? csv::parse_double(row[c_score], t.source)
                                              : std::numeric_limits<double>::quiet_NaN();
    table.rows.push_back(r);
  }
  return threshold_labels(std::move(table), 0.5);
}

}  // namespace datscore::ensemble
