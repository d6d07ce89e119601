#include "datscore/synth.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "datscore/digest.hpp"
#include "datscore/error.hpp"

namespace datscore::synth {

using cohort::Diagnosis;
using cohort::Stratum;

namespace {

struct GroupDemographics {
  double male_fraction;
  double age_mean;
  double age_sd;
};

// Sex ratio and age per group, shaped after the ADNI1 cohort description.
GroupDemographics demographics(Stratum s) {
  switch (s) {
    case Stratum::sNC: return {58.0 / 109.0, 75.79, 4.93};
    case Stratum::uNC: return {14.0 / 22.0, 76.57, 3.70};
    case Stratum::pNC: return {6.0 / 14.0, 76.49, 4.33};
    case Stratum::sMCI: return {65.0 / 101.0, 74.70, 7.35};
    case Stratum::pMCI: return {99.0 / 155.0, 73.85, 6.85};
    case Stratum::eDAT: return {2.0 / 4.0, 75.80, 4.13};
    case Stratum::sDAT: return {74.0 / 138.0, 75.19, 7.54};
  }
  return {0.5, 75.0, 5.0};
}

std::vector<std::string> build_roi_names() {
  static const char* cortical[] = {
      "bankssts",         "caudalanteriorcingulate", "caudalmiddlefrontal", "cuneus",
      "entorhinal",       "fusiform",                "inferiorparietal",    "inferiortemporal",
      "isthmuscingulate", "lateraloccipital",        "lateralorbitofrontal", "lingual",
      "medialorbitofrontal", "middletemporal",       "parahippocampal",     "paracentral",
      "parsopercularis",  "parsorbitalis",           "parstriangularis",    "pericalcarine",
      "postcentral",      "posteriorcingulate",      "precentral",          "precuneus",
      "rostralanteriorcingulate", "rostralmiddlefrontal", "superiorfrontal", "superiorparietal",
      "superiortemporal", "supramarginal",           "frontalpole",         "temporalpole",
      "transversetemporal", "insula"};
  static const char* subcortical[] = {"Thalamus", "Caudate",       "Putamen",  "Pallidum",
                                      "Hippocampus", "Amygdala", "Accumbens-area", "VentralDC"};
  std::vector<std::string> names;
  for (const char* hemi : {"lh", "rh"})
    for (const char* c : cortical) names.push_back(fmt::format("ctx-{}-{}", hemi, c));
  for (const char* side : {"Left", "Right"})
    for (const char* s : subcortical) names.push_back(fmt::format("{}-{}", side, s));
  for (const char* side : {"Left", "Right"}) {
    names.push_back(fmt::format("{}-Lateral-Ventricle", side));
    names.push_back(fmt::format("{}-Inf-Lat-Vent", side));
  }
  names.emplace_back("3rd-Ventricle");
  names.emplace_back("4th-Ventricle");
  names.emplace_back("CSF");
  return names;
}

bool is_csf_space(const std::string& roi) {
  return roi.find("Vent") != std::string::npos || roi == "CSF";
}

// Genotype probabilities (minor-allele count 0, 1, 2) under HWE, tilted by or^g.
std::array<double, 3> genotype_probs(double maf, double odds_ratio) {
  const double q = 1.0 - maf;
  std::array<double, 3> w{q * q, 2.0 * maf * q * odds_ratio, maf * maf * odds_ratio * odds_ratio};
  const double s = w[0] + w[1] + w[2];
  for (auto& x : w) x /= s;
  return w;
}

int draw_genotype(const std::array<double, 3>& p, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (u < p[0]) return 0;
  if (u < p[0] + p[1]) return 1;
  return 2;
}

const char* kBases[] = {"A", "C", "G", "T"};

cohort::DiagnosisTimeline make_timeline(const std::string& id, Stratum s, bool screening,
                                        std::mt19937_64& rng) {
  auto coin = [&](double p) { return std::bernoulli_distribution(p)(rng); };
  const std::vector<int> all_followups{6, 12, 24, 36, 48};
  const int n_follow = std::uniform_int_distribution<int>(3, 5)(rng);
  std::vector<int> months(all_followups.begin(), all_followups.begin() + n_follow);

  Diagnosis screen_dx = Diagnosis::NC, base_dx = Diagnosis::NC;
  std::vector<Diagnosis> follow(months.size(), Diagnosis::NC);
  auto convert = [&](Diagnosis from, Diagnosis to, std::size_t start) {
    for (std::size_t i = 0; i < follow.size(); ++i) follow[i] = i < start ? from : to;
  };
  const auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  switch (s) {
    case Stratum::sNC: break;
    case Stratum::uNC: convert(Diagnosis::NC, Diagnosis::MCI, pick(0, follow.size() - 1)); break;
    case Stratum::pNC: {
      const auto to_dat = pick(1, follow.size() - 1);
      convert(Diagnosis::NC, Diagnosis::DAT, to_dat);
      if (coin(0.7)) follow[pick(0, to_dat - 1)] = Diagnosis::MCI;
      for (std::size_t i = 1; i < to_dat; ++i)
        if (follow[i - 1] == Diagnosis::MCI) follow[i] = Diagnosis::MCI;
      break;
    }
    case Stratum::sMCI:
      screen_dx = coin(0.15) ? Diagnosis::NC : Diagnosis::MCI;
      base_dx = Diagnosis::MCI;
      convert(Diagnosis::MCI, Diagnosis::MCI, 0);
      break;
    case Stratum::pMCI:
      screen_dx = base_dx = Diagnosis::MCI;
      convert(Diagnosis::MCI, Diagnosis::DAT, pick(0, follow.size() - 1));
      break;
    case Stratum::eDAT:
      screen_dx = coin(0.7) ? Diagnosis::MCI : Diagnosis::NC;
      base_dx = Diagnosis::DAT;
      convert(Diagnosis::DAT, Diagnosis::DAT, 0);
      break;
    case Stratum::sDAT:
      screen_dx = base_dx = Diagnosis::DAT;
      convert(Diagnosis::DAT, Diagnosis::DAT, 0);
      break;
  }
  cohort::DiagnosisTimeline tl{id, {}};
  if (screening) tl.visits.push_back({-3, screen_dx, false});
  tl.visits.push_back({0, base_dx, true});
  for (std::size_t i = 0; i < months.size(); ++i) tl.visits.push_back({months[i], follow[i], true});
  return tl;
}

}  // namespace

const std::vector<std::string>& roi_names() {
  static const std::vector<std::string> names = build_roi_names();
  return names;
}

SynthConfig SynthConfig::defaults() {
  SynthConfig c;
  c.group_sizes = {{Stratum::sNC, 109}, {Stratum::uNC, 22},  {Stratum::pNC, 14}, {Stratum::sMCI, 101},
                   {Stratum::pMCI, 155}, {Stratum::eDAT, 4}, {Stratum::sDAT, 138}};
  c.profiles = {{Stratum::sNC, {0.0, 0.0}},  {Stratum::uNC, {0.2, 0.1}},  {Stratum::pNC, {1.0, 0.0}},
                {Stratum::sMCI, {0.7, 0.2}}, {Stratum::pMCI, {1.0, 0.7}}, {Stratum::eDAT, {1.0, 1.0}},
                {Stratum::sDAT, {1.0, 1.0}}};
  c.affected_rois = {"Left-Hippocampus", "Right-Hippocampus", "Left-Amygdala",
                     "Right-Amygdala",   "ctx-lh-entorhinal", "ctx-rh-entorhinal"};
  return c;
}

SynthConfig SynthConfig::null_model() {
  auto c = defaults();
  c.causal_or = 1.0;
  c.apoe_e4_or = 1.0;
  c.atrophy_effect = 0.0;
  return c;
}

std::size_t SynthConfig::total_subjects() const {
  std::size_t n = 0;
  for (const auto& [s, k] : group_sizes) n += k;
  return n;
}

void SynthConfig::validate() const {
  if (total_subjects() == 0) throw ValidationError("synthetic cohort has no subjects");
  if (n_snps == 0) throw ValidationError("n_snps must be positive");
  if (n_causal_snps > n_snps)
    throw ValidationError(fmt::format("{} causal SNPs exceed n_snps = {}", n_causal_snps, n_snps));
  if (!(causal_or > 0.0) || !(apoe_e4_or > 0.0)) throw ValidationError("odds ratios must be > 0");
  auto range_ok = [](double lo, double hi) { return lo > 0.0 && lo <= hi && hi <= 0.5; };
  if (!range_ok(maf_lo, maf_hi) || !range_ok(causal_maf_lo, causal_maf_hi))
    throw ValidationError("MAF ranges must lie within (0, 0.5]");
  if (!(genotype_missing_rate >= 0.0 && genotype_missing_rate < 1.0))
    throw ValidationError("genotype_missing_rate must lie in [0, 1)");
  if (!(noise_cv > 0.0) || !(atrophy_effect >= 0.0)) throw ValidationError("noise_cv must be > 0, atrophy_effect >= 0");
  const auto& names = roi_names();
  for (const auto& r : affected_rois)
    if (std::find(names.begin(), names.end(), r) == names.end())
      throw ValidationError(fmt::format("affected ROI '{}' is not a generated region", r));
  for (const auto& [s, p] : profiles)
    if (!(p.genetic_case_fraction >= 0 && p.genetic_case_fraction <= 1 && p.atrophy_fraction >= 0 &&
          p.atrophy_fraction <= 1))
      throw ValidationError(fmt::format("profile fractions for {} must lie in [0, 1]", cohort::to_string(s)));
  if (!screening_visit) {
    const auto it = group_sizes.find(Stratum::eDAT);
    if (it != group_sizes.end() && it->second > 0)
      throw ValidationError("eDAT subjects need a pre-baseline screening visit; enable screening_visit");
  }
}

SynthDataset generate(const SynthConfig& config) {
  config.validate();
  SynthDataset out;
  std::mt19937_64 cohort_rng(derive_seed(config.seed, "synth.cohort"));
  std::mt19937_64 geno_rng(derive_seed(config.seed, "synth.genotypes"));
  std::mt19937_64 anat_rng(derive_seed(config.seed, "synth.anatomy"));
  std::mt19937_64 vol_rng(derive_seed(config.seed, "synth.volumes"));
  std::mt19937_64 time_rng(derive_seed(config.seed, "synth.timelines"));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  // Subjects in a shuffled order so ids carry no stratum information.
  std::vector<Stratum> strata;
  for (auto s : cohort::kAllStrata) {
    const auto it = config.group_sizes.find(s);
    if (it != config.group_sizes.end()) strata.insert(strata.end(), it->second, s);
  }
  std::shuffle(strata.begin(), strata.end(), cohort_rng);
  const std::size_t n = strata.size();
  const int width = std::max<int>(4, static_cast<int>(std::to_string(n).size()));

  std::vector<std::string> ids;
  std::vector<bool> is_case(n), is_atrophic(n), male(n);
  auto& truth = out.truth;
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back(fmt::format("SUBJ{:0{}}", i + 1, width));
    StratumProfile prof;
    if (auto it = config.profiles.find(strata[i]); it != config.profiles.end()) prof = it->second;
    is_case[i] = unif(cohort_rng) < prof.genetic_case_fraction;
    is_atrophic[i] = unif(cohort_rng) < prof.atrophy_fraction;
    const auto demo = demographics(strata[i]);
    male[i] = unif(cohort_rng) < demo.male_fraction;
    cohort::Covariates c;
    c.age = std::round((demo.age_mean + demo.age_sd * gauss(cohort_rng)) * 10.0) / 10.0;
    c.sex = male[i] ? "M" : "F";
    c.field_strength = unif(cohort_rng) < 0.7 ? "1.5T" : "3T";
    const double u = unif(cohort_rng);
    c.scanner = u < 0.4 ? "GE" : u < 0.6 ? "Philips" : "Siemens";
    c.tiv = std::round(1.45e6 + (male[i] ? 1.2e5 : 0.0) + 1.2e5 * gauss(cohort_rng));
    out.covariates.emplace(ids[i], c);
    truth.strata[ids[i]] = strata[i];
    truth.genetic_case[ids[i]] = is_case[i];
    truth.atrophic[ids[i]] = is_atrophic[i];
    truth.latent_risk[ids[i]] = 0.0;
  }

  // Genotypes: causal SNPs are spread across the panel at seeded positions.
  std::vector<std::size_t> causal_idx(config.n_snps);
  for (std::size_t j = 0; j < config.n_snps; ++j) causal_idx[j] = j;
  std::shuffle(causal_idx.begin(), causal_idx.end(), geno_rng);
  causal_idx.resize(config.n_causal_snps);
  const std::set<std::size_t> causal(causal_idx.begin(), causal_idx.end());

  std::vector<plink::VariantRecord> variants;
  std::vector<plink::Call> calls(config.n_snps * n);
  const double log_or = std::log(config.causal_or);
  const std::size_t per_chrom = (config.n_snps + 21) / 22;
  for (std::size_t j = 0; j < config.n_snps; ++j) {
    plink::VariantRecord v;
    v.chromosome = std::to_string(1 + j / per_chrom);
    v.snp_id = fmt::format("rs{}", 100000 + j);
    v.position = static_cast<std::int64_t>(1000 + (j % per_chrom) * 5000);
    const auto b = std::uniform_int_distribution<int>(0, 3)(geno_rng);
    const auto b2 = (b + 1 + std::uniform_int_distribution<int>(0, 2)(geno_rng)) % 4;
    v.allele1 = kBases[b];  // the minor allele in the source population
    v.allele2 = kBases[b2];
    const bool is_causal = causal.count(j) > 0;
    const double maf = is_causal
                           ? config.causal_maf_lo + (config.causal_maf_hi - config.causal_maf_lo) * unif(geno_rng)
                           : config.maf_lo + (config.maf_hi - config.maf_lo) * unif(geno_rng);
    if (is_causal) truth.causal_snp_ids.push_back(v.snp_id);
    const auto p_control = genotype_probs(maf, 1.0);
    const auto p_case = genotype_probs(maf, config.causal_or);
    for (std::size_t i = 0; i < n; ++i) {
      const int g = draw_genotype(is_causal && is_case[i] ? p_case : p_control, geno_rng);
      if (is_causal) truth.latent_risk[ids[i]] += g * log_or;
      plink::Call c = g == 2 ? plink::Call::hom_a1 : g == 1 ? plink::Call::het : plink::Call::hom_a2;
      if (unif(geno_rng) < config.genotype_missing_rate) c = plink::Call::missing;
      calls[j * n + i] = c;
    }
    variants.push_back(std::move(v));
  }
  std::sort(truth.causal_snp_ids.begin(), truth.causal_snp_ids.end());
  std::vector<plink::SampleRecord> samples;
  for (std::size_t i = 0; i < n; ++i) {
    plink::SampleRecord s;
    s.family_id = ids[i];
    s.individual_id = ids[i];
    s.sex = male[i] ? plink::Sex::male : plink::Sex::female;
    samples.push_back(std::move(s));
  }
  out.genotypes = plink::GenotypeMatrix::from_calls(std::move(samples), std::move(variants), calls);

  // APOE: two alleles from e2/e3/e4 population frequencies, e4 weighted up for genetic cases.
  for (std::size_t i = 0; i < n; ++i) {
    std::array<double, 3> f{0.08, 0.77, 0.15};
    if (is_case[i]) f[2] *= config.apoe_e4_or;
    const double s = f[0] + f[1] + f[2];
    plink::ApoeRecord rec{0, 0, 0};
    for (int a = 0; a < 2; ++a) {
      const double u = unif(geno_rng) * s;
      rec[u < f[0] ? 0 : u < f[0] + f[1] ? 1 : 2] = 1;
    }
    out.apoe.emplace(ids[i], rec);
  }

  // Volumes: baseline + covariate effects - atrophy + noise.
  const auto& rois = roi_names();
  truth.affected_rois = config.affected_rois;
  std::sort(truth.affected_rois.begin(), truth.affected_rois.end());
  const std::set<std::string> affected(config.affected_rois.begin(), config.affected_rois.end());
  out.volumes.subject_ids = ids;
  out.volumes.roi_names = rois;
  out.volumes.volumes.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(rois.size()));
  for (std::size_t j = 0; j < rois.size(); ++j) {
    const double mean = is_csf_space(rois[j]) ? 800.0 + 20000.0 * unif(anat_rng)
                                              : 1500.0 + 13500.0 * unif(anat_rng);
    const double sd = config.noise_cv * mean;
    const double tiv_slope = 0.6 * mean / 1.45e6;
    const double sex_off = 0.02 * mean * gauss(anat_rng);
    const double field_off = 0.015 * mean * gauss(anat_rng);
    const std::map<std::string, double> scanner_off{
        {"GE", 0.0}, {"Philips", 0.01 * mean * gauss(anat_rng)}, {"Siemens", 0.01 * mean * gauss(anat_rng)}};
    const bool hit = affected.count(rois[j]) > 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& c = out.covariates.at(ids[i]);
      double v = mean + tiv_slope * (c.tiv - 1.45e6) + (male[i] ? sex_off : 0.0) +
                 (c.field_strength == "3T" ? field_off : 0.0) + scanner_off.at(c.scanner);
      if (hit && is_atrophic[i]) v -= config.atrophy_effect * sd;
      v += sd * gauss(vol_rng);
      out.volumes.volumes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::max(1.0, std::round(v * 10.0) / 10.0);
    }
  }

  for (std::size_t i = 0; i < n; ++i)
    out.timelines.push_back(make_timeline(ids[i], strata[i], config.screening_visit, time_rng));
  return out;
}

DatasetPaths DatasetPaths::in(const std::filesystem::path& dir) {
  return {dir / "genotypes", dir / "volumes.csv", dir / "timelines.csv", dir / "covariates.csv",
          dir / "apoe.csv",  dir / "ground_truth.json"};
}

namespace {

nlohmann::json truth_to_json(const GroundTruth& t) {
  nlohmann::json j;
  j["causal_snp_ids"] = t.causal_snp_ids;
  j["affected_rois"] = t.affected_rois;
  nlohmann::json subjects = nlohmann::json::array();
  for (const auto& [id, s] : t.strata)
    subjects.push_back({{"subject_id", id},
                        {"stratum", cohort::to_string(s)},
                        {"latent_risk", t.latent_risk.at(id)},
                        {"genetic_case", t.genetic_case.at(id)},
                        {"atrophic", t.atrophic.at(id)}});
  j["subjects"] = subjects;
  return j;
}

}  // namespace

DatasetPaths write_dataset(const SynthDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto paths = DatasetPaths::in(dir);
  plink::write_bed_trio(data.genotypes, plink::BedPaths::from_prefix(paths.genotype_prefix));
  harmonize::write_volumes_csv(data.volumes, paths.volumes);
  cohort::write_timelines_csv(data.timelines, paths.timelines);
  cohort::write_covariates_csv(data.covariates, paths.covariates);
  plink::write_apoe_csv(data.apoe, paths.apoe);
  std::ofstream out(paths.ground_truth);
  if (!out) throw IoError(fmt::format("cannot write '{}'", paths.ground_truth.string()));
  out << truth_to_json(data.truth).dump(2) << '\n';
  return paths;
}

GroundTruth read_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read '{}'", path.string()));
  GroundTruth t;
  try {
    const auto j = nlohmann::json::parse(in);
    t.causal_snp_ids = j.at("causal_snp_ids").get<std::vector<std::string>>();
    t.affected_rois = j.at("affected_rois").get<std::vector<std::string>>();
    for (const auto& s : j.at("subjects")) {
      const auto id = s.at("subject_id").get<std::string>();
      t.strata[id] = cohort::parse_stratum(s.at("stratum").get<std::string>());
      t.latent_risk[id] = s.at("latent_risk").get<double>();
      t.genetic_case[id] = s.at("genetic_case").get<bool>();
      t.atrophic[id] = s.at("atrophic").get<bool>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return t;
}

Recovery describe_truth(const GroundTruth& truth, const featsel::FeatureSet& selected) {
  auto stats = [&](const std::vector<std::string>& planted_ids, featsel::Modality m,
                   std::string (*ns)(std::string_view)) {
    RecoveryStats r;
    std::set<std::string> planted;
    for (const auto& id : planted_ids) planted.insert(ns(id));
    r.planted = planted.size();
    for (const auto& f : selected.features) {
      if (f.source != m) continue;
      ++r.selected;
      if (planted.count(f.feature_id)) ++r.hits;
    }
    r.recall = r.planted ? static_cast<double>(r.hits) / static_cast<double>(r.planted) : 0.0;
    r.precision_undefined = r.selected == 0;
    r.precision = r.selected ? static_cast<double>(r.hits) / static_cast<double>(r.selected) : 0.0;
    return r;
  };
  return {stats(truth.causal_snp_ids, featsel::Modality::genetic, featsel::snp_feature_id),
          stats(truth.affected_rois, featsel::Modality::mri, featsel::roi_feature_id)};
}

}  // namespace datscore::synth
