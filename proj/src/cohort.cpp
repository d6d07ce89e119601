#include "datscore/cohort.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <unordered_map>

#include "datscore/csv.hpp"
#include "datscore/error.hpp"

namespace datscore::cohort {

const char* to_string(Stratum s) {
  switch (s) {
    case Stratum::sNC: return "sNC";
    case Stratum::uNC: return "uNC";
    case Stratum::pNC: return "pNC";
    case Stratum::sMCI: return "sMCI";
    case Stratum::pMCI: return "pMCI";
    case Stratum::eDAT: return "eDAT";
    case Stratum::sDAT: return "sDAT";
  }
  return "?";
}

const char* to_string(Diagnosis d) {
  switch (d) {
    case Diagnosis::NC: return "NC";
    case Diagnosis::MCI: return "MCI";
    case Diagnosis::DAT: return "DAT";
  }
  return "?";
}

const char* to_string(Trajectory t) { return t == Trajectory::DAT_plus ? "DAT+" : "DAT-"; }

Stratum parse_stratum(std::string_view s) {
  for (auto st : kAllStrata)
    if (s == to_string(st)) return st;
  throw ValidationError(fmt::format("unknown stratum '{}'", s));
}

Diagnosis parse_diagnosis(std::string_view s) {
  if (s == "NC" || s == "CN") return Diagnosis::NC;
  if (s == "MCI") return Diagnosis::MCI;
  if (s == "DAT" || s == "AD") return Diagnosis::DAT;
  throw ValidationError(fmt::format("unknown diagnosis '{}'", s));
}

Trajectory trajectory_of(Stratum s) {
  switch (s) {
    case Stratum::pNC:
    case Stratum::pMCI:
    case Stratum::eDAT:
    case Stratum::sDAT: return Trajectory::DAT_plus;
    default: return Trajectory::DAT_minus;
  }
}

StratumLabel stratify(const DiagnosisTimeline& timeline) {
  auto visits = timeline.visits;
  std::stable_sort(visits.begin(), visits.end(),
                   [](const Visit& a, const Visit& b) { return a.month < b.month; });
  for (std::size_t i = 1; i < visits.size(); ++i)
    if (visits[i].month == visits[i - 1].month)
      throw ValidationError(fmt::format("subject '{}': two visits at month {}", timeline.subject_id,
                                        visits[i].month));

  const auto baseline = std::find_if(visits.begin(), visits.end(),
                                     [](const Visit& v) { return v.is_imaging; });
  if (baseline == visits.end())
    throw ValidationError(fmt::format("subject '{}' has no imaging visit", timeline.subject_id));

  bool seen_dat = false;
  for (const auto& v : visits) {
    if (v.diagnosis == Diagnosis::DAT) seen_dat = true;
    else if (seen_dat)
      throw ValidationError(fmt::format("subject '{}': diagnosis reverts from DAT to {} at month {}",
                                        timeline.subject_id, to_string(v.diagnosis), v.month));
  }

  auto reaches = [&](Diagnosis d) {
    return std::any_of(baseline + 1, visits.end(), [d](const Visit& v) { return v.diagnosis == d; });
  };

  Stratum s{};
  switch (baseline->diagnosis) {
    case Diagnosis::NC:
      s = reaches(Diagnosis::DAT) ? Stratum::pNC : reaches(Diagnosis::MCI) ? Stratum::uNC : Stratum::sNC;
      break;
    case Diagnosis::MCI:
      s = reaches(Diagnosis::DAT) ? Stratum::pMCI : Stratum::sMCI;
      break;
    case Diagnosis::DAT: {
      const bool earlier_non_dat = std::any_of(visits.begin(), baseline, [](const Visit& v) {
        return v.diagnosis != Diagnosis::DAT;
      });
      s = earlier_non_dat ? Stratum::eDAT : Stratum::sDAT;
      break;
    }
  }
  return {s, trajectory_of(s)};
}

std::vector<DiagnosisTimeline> read_timelines_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const auto c_id = t.column("subject_id");
  const auto c_month = t.column("month");
  const auto c_dx = t.column("diagnosis");
  const auto c_img = t.column("is_imaging");
  std::vector<DiagnosisTimeline> out;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& row : t.rows) {
    Visit v;
    v.month = static_cast<int>(csv::parse_int(row[c_month], t.source));
    v.diagnosis = parse_diagnosis(row[c_dx]);
    const auto& img = row[c_img];
    if (img == "1" || img == "true" || img == "TRUE") v.is_imaging = true;
    else if (img == "0" || img == "false" || img == "FALSE") v.is_imaging = false;
    else throw ValidationError(fmt::format("{}: is_imaging '{}' is not boolean", t.source, img));
    auto [it, inserted] = index.emplace(row[c_id], out.size());
    if (inserted) out.push_back({row[c_id], {}});
    out[it->second].visits.push_back(v);
  }
  for (auto& tl : out)
    std::stable_sort(tl.visits.begin(), tl.visits.end(),
                     [](const Visit& a, const Visit& b) { return a.month < b.month; });
  return out;
}

void write_timelines_csv(std::span<const DiagnosisTimeline> timelines,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << "subject_id,month,diagnosis,is_imaging\n";
  for (const auto& tl : timelines)
    for (const auto& v : tl.visits)
      out << fmt::format("{},{},{},{}\n", tl.subject_id, v.month, to_string(v.diagnosis),
                         v.is_imaging ? 1 : 0);
}

CovariateTable read_covariates_csv(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const auto c_id = t.column("subject_id");
  const auto c_age = t.column("age");
  const auto c_sex = t.column("sex");
  const auto c_fs = t.column("field_strength");
  const auto c_sc = t.column("scanner");
  const auto c_tiv = t.column("tiv");
  CovariateTable out;
  for (const auto& row : t.rows) {
    Covariates c;
    c.age = csv::parse_double(row[c_age], t.source);
    c.sex = row[c_sex];
    c.field_strength = row[c_fs];
    c.scanner = row[c_sc];
    c.tiv = csv::parse_double(row[c_tiv], t.source);
    if (!out.emplace(row[c_id], std::move(c)).second)
      throw ValidationError(fmt::format("{}: duplicate subject_id '{}'", t.source, row[c_id]));
  }
  return out;
}

void write_covariates_csv(const CovariateTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << "subject_id,age,sex,field_strength,scanner,tiv\n";
  for (const auto& [id, c] : table)
    out << fmt::format("{},{},{},{},{},{}\n", id, csv::format_double(c.age), c.sex,
                       c.field_strength, c.scanner, csv::format_double(c.tiv));
}

std::map<Stratum, std::size_t> Cohort::stratum_counts() const {
  std::map<Stratum, std::size_t> counts;
  for (auto s : kAllStrata) counts[s] = 0;
  for (const auto& subj : subjects) ++counts[subj.label.stratum];
  return counts;
}

std::size_t Cohort::training_eligible_count() const {
  return static_cast<std::size_t>(std::count_if(
      subjects.begin(), subjects.end(), [](const CohortSubject& s) { return s.has_all_modalities(); }));
}

std::vector<std::string> Cohort::ids_in(Stratum s, bool require_all_modalities) const {
  std::vector<std::string> ids;
  for (const auto& subj : subjects)
    if (subj.label.stratum == s && (!require_all_modalities || subj.has_all_modalities()))
      ids.push_back(subj.subject_id);
  return ids;
}

const CohortSubject* Cohort::find(std::string_view id) const {
  for (const auto& s : subjects)
    if (s.subject_id == id) return &s;
  return nullptr;
}

Cohort build_cohort(std::span<const DiagnosisTimeline> timelines, const CovariateTable& covariates,
                    std::span<const std::string> genotype_ids, std::span<const std::string> mri_ids) {
  std::unordered_map<std::string, std::size_t> geno, mri;
  for (std::size_t i = 0; i < genotype_ids.size(); ++i) geno.emplace(genotype_ids[i], i);
  for (std::size_t i = 0; i < mri_ids.size(); ++i) mri.emplace(mri_ids[i], i);

  Cohort c;
  c.subjects.reserve(timelines.size());
  for (const auto& tl : timelines) {
    CohortSubject s;
    s.subject_id = tl.subject_id;
    s.label = stratify(tl);
    if (auto it = covariates.find(tl.subject_id); it != covariates.end()) s.covariates = it->second;
    if (auto it = geno.find(tl.subject_id); it != geno.end()) s.genotype_row = it->second;
    if (auto it = mri.find(tl.subject_id); it != mri.end()) s.mri_row = it->second;
    c.subjects.push_back(std::move(s));
  }
  return c;
}

}  // namespace datscore::cohort
