#include "datscore/pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>

#include "datscore/cohort.hpp"
#include "datscore/digest.hpp"
#include "datscore/error.hpp"
#include "datscore/harmonize.hpp"
#include "datscore/plink_io.hpp"
#include "datscore/report.hpp"

namespace datscore::pipeline {

namespace fs = std::filesystem;
using featsel::Modality;
using io::json;

const char* to_string(Selector s) { return s == Selector::lasso ? "lasso" : "fisher_ttest"; }

Selector parse_selector(std::string_view s) {
  if (s == "fisher_ttest") return Selector::fisher_ttest;
  if (s == "lasso") return Selector::lasso;
  throw ValidationError(fmt::format("unknown selector '{}' (expected fisher_ttest or lasso)", s));
}

const char* to_string(Stage s) {
  switch (s) {
    case Stage::qc: return "qc";
    case Stage::wscore: return "wscore";
    case Stage::select: return "select";
    case Stage::train: return "train";
    case Stage::score: return "score";
    case Stage::evaluate: return "evaluate";
  }
  return "?";
}

namespace {

// The modality implied by a fixed feature list.
Modality fixed_modality(std::span<const std::string> ids) {
  bool g = false, m = false;
  for (const auto& id : ids) (featsel::modality_of(id) == Modality::genetic ? g : m) = true;
  return g && m ? Modality::combined : (g ? Modality::genetic : Modality::mri);
}

std::vector<Modality> effective_modalities(const PipelineConfig& c) {
  if (!c.fixed_features.empty()) return {fixed_modality(c.fixed_features)};
  return c.modalities;
}

}  // namespace

void PipelineConfig::validate() const {
  qc.validate();
  mkl.validate();
  if (f_subsets < 1) throw ValidationError("subbag.f must be at least 1");
  if (!(sampling_ratio > 0.0 && sampling_ratio <= 1.0))
    throw ValidationError(fmt::format("subbag.ratio {} is outside (0, 1]", sampling_ratio));
  if (k_per_modality < 1) throw ValidationError("k_per_modality must be at least 1");
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw ValidationError(fmt::format("threshold {} is outside [0, 1]", threshold));
  if (repetitions < 1) throw ValidationError("repetitions must be at least 1");
  if (modalities.empty()) throw ValidationError("modalities must not be empty");
  std::set<Modality> seen;
  for (auto m : modalities)
    if (!seen.insert(m).second)
      throw ValidationError(fmt::format("modality '{}' listed twice", featsel::to_string(m)));
  for (const auto& id : fixed_features) featsel::modality_of(id);
  if (inputs.timelines.empty()) throw ValidationError("inputs.timelines is required");
  if (needs(Modality::genetic) && inputs.genotype_prefix.empty())
    throw ValidationError("inputs.genotype_prefix is required for genetic features");
  if (needs(Modality::mri) && (inputs.volumes.empty() || inputs.covariates.empty()))
    throw ValidationError("inputs.volumes and inputs.covariates are required for MRI features");
}

bool PipelineConfig::needs(Modality block) const {
  for (auto m : effective_modalities(*this))
    if (m == block || m == Modality::combined) return true;
  return false;
}

json to_json(const PipelineConfig& c) {
  json mods = json::array();
  for (auto m : c.modalities) mods.push_back(featsel::to_string(m));
  return {
      {"inputs",
       {{"genotype_prefix", c.inputs.genotype_prefix.string()},
        {"volumes", c.inputs.volumes.string()},
        {"timelines", c.inputs.timelines.string()},
        {"covariates", c.inputs.covariates.string()},
        {"apoe", c.inputs.apoe.string()}}},
      {"output_dir", c.output_dir.string()},
      {"qc", io::to_json(c.qc)},
      {"subbag", {{"f", c.f_subsets}, {"ratio", c.sampling_ratio}}},
      {"k_per_modality", c.k_per_modality},
      {"mkl", io::to_json(c.mkl)},
      {"selector", to_string(c.selector)},
      {"modalities", mods},
      {"seed", c.seed},
      {"threshold", c.threshold},
      {"repetitions", c.repetitions},
      {"fixed_features", c.fixed_features},
  };
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw ValidationError(fmt::format("{} must be an object", what));
  for (const auto& [key, _] : j.items())
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ValidationError(fmt::format("unknown key '{}' in {}", key, what));
}

fs::path resolve(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key)) return {};
  const fs::path p = j.at(key).get<std::string>();
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

}  // namespace

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
  PipelineConfig c;
  try {
    check_keys(j,
               {"inputs", "output_dir", "qc", "subbag", "k_per_modality", "mkl", "selector", "modalities",
                "seed", "threshold", "repetitions", "fixed_features"},
               "config");
    if (j.contains("inputs")) {
      const auto& in = j.at("inputs");
      check_keys(in, {"genotype_prefix", "volumes", "timelines", "covariates", "apoe"}, "inputs");
      c.inputs.genotype_prefix = resolve(in, "genotype_prefix", base_dir);
      c.inputs.volumes = resolve(in, "volumes", base_dir);
      c.inputs.timelines = resolve(in, "timelines", base_dir);
      c.inputs.covariates = resolve(in, "covariates", base_dir);
      c.inputs.apoe = resolve(in, "apoe", base_dir);
    }
    if (j.contains("output_dir")) c.output_dir = resolve(j, "output_dir", base_dir);
    if (j.contains("qc")) c.qc = io::qc_thresholds_from_json(j.at("qc"));
    if (j.contains("subbag")) {
      const auto& sb = j.at("subbag");
      check_keys(sb, {"f", "ratio"}, "subbag");
      if (sb.contains("f")) c.f_subsets = sb.at("f").get<std::size_t>();
      if (sb.contains("ratio")) c.sampling_ratio = sb.at("ratio").get<double>();
    }
    if (j.contains("k_per_modality")) c.k_per_modality = j.at("k_per_modality").get<std::size_t>();
    if (j.contains("mkl")) c.mkl = io::mkl_config_from_json(j.at("mkl"));
    if (j.contains("selector")) c.selector = parse_selector(j.at("selector").get<std::string>());
    if (j.contains("modalities")) {
      c.modalities.clear();
      for (const auto& m : j.at("modalities")) c.modalities.push_back(featsel::parse_modality(m.get<std::string>()));
    }
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("threshold")) c.threshold = j.at("threshold").get<double>();
    if (j.contains("repetitions")) c.repetitions = j.at("repetitions").get<std::size_t>();
    if (j.contains("fixed_features")) c.fixed_features = j.at("fixed_features").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("config: {}", e.what()));
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  return config_from_json(io::read_json(path), path.parent_path());
}

std::string config_hash(const PipelineConfig& c) {
  // Paths are excluded: inputs are identified by their digests in the manifest.
  json j = to_json(c);
  j.erase("output_dir");
  j.erase("inputs");
  return sha256_hex(j.dump());
}

namespace {

struct Files {
  Layout layout;

  fs::path in(const std::string& name) const { return layout.intermediate() / name; }
  fs::path genotypes() const { return in("genotypes_qc.bin"); }
  fs::path qc_report() const { return in("qc_report.json"); }
  fs::path minor_alleles() const { return in("minor_alleles.json"); }
  fs::path glm() const { return in("glm_model.json"); }
  fs::path wscores() const { return in("wscores.csv"); }
  fs::path plan(std::size_t r) const { return in(fmt::format("plan_{}.json", r)); }
  fs::path selections(Modality m, std::size_t r) const {
    return in(fmt::format("selections_{}_{}.json", featsel::to_string(m), r));
  }
  fs::path features(Modality m, std::size_t r) const {
    return in(fmt::format("features_{}_{}.json", featsel::to_string(m), r));
  }
  fs::path ensemble(Modality m, std::size_t r) const {
    return in(fmt::format("ensemble_{}_{}.json", featsel::to_string(m), r));
  }
  fs::path scores(Modality m, std::size_t r) const {
    return in(fmt::format("scores_{}_{}.csv", featsel::to_string(m), r));
  }
  fs::path marker(Stage s) const { return in(fmt::format("stage_{}.json", to_string(s))); }
};

std::uint64_t repetition_seed(const PipelineConfig& c, std::size_t r) {
  return derive_seed(c.seed, "repetition", r);
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw IoError(fmt::format("{} '{}' does not exist", what, p.string()));
}

std::vector<fs::path> input_files(const PipelineConfig& c) {
  std::vector<fs::path> files;
  if (c.needs(Modality::genetic)) {
    const auto bp = plink::BedPaths::from_prefix(c.inputs.genotype_prefix);
    files.insert(files.end(), {bp.bed, bp.bim, bp.fam});
    if (!c.inputs.apoe.empty()) files.push_back(c.inputs.apoe);
  }
  if (c.needs(Modality::mri)) files.insert(files.end(), {c.inputs.volumes, c.inputs.covariates});
  files.push_back(c.inputs.timelines);
  return files;
}

void check_inputs(const PipelineConfig& c) {
  for (const auto& f : input_files(c)) require_file(f, "input file");
}

std::map<std::string, std::string> input_digests(const PipelineConfig& c) {
  std::map<std::string, std::string> d;
  for (const auto& f : input_files(c)) d[f.filename().string()] = sha256_file(f);
  return d;
}

std::string marker_token(const PipelineConfig& c) {
  json j = {{"config_hash", config_hash(c)}, {"inputs", input_digests(c)}};
  return sha256_hex(j.dump());
}

bool marker_matches(const Files& f, Stage s, const std::string& token) {
  if (!fs::is_regular_file(f.marker(s))) return false;
  try {
    return io::read_json(f.marker(s)).value("token", std::string{}) == token;
  } catch (const Error&) {
    return false;
  }
}

void write_marker(const Files& f, Stage s, const std::string& token) {
  io::write_json({{"stage", to_string(s)}, {"token", token}}, f.marker(s));
}

// ---- shared data -----------------------------------------------------------

struct Data {
  std::optional<plink::RecodedGenotypes> genotypes;
  std::optional<harmonize::WScoreTable> wscores;
  cohort::Cohort cohort;
};

bool is_training_stratum(cohort::Stratum s) { return s == cohort::Stratum::sNC || s == cohort::Stratum::sDAT; }

Data load_data(const PipelineConfig& c, const Files& f) {
  Data d;
  std::vector<std::string> geno_ids, mri_ids;
  if (c.needs(Modality::genetic)) {
    require_file(f.genotypes(), "QC output (run the qc stage first)");
    d.genotypes = plink::read_recoded(f.genotypes());
    geno_ids = d.genotypes->subject_ids;
  }
  cohort::CovariateTable covariates;
  if (c.needs(Modality::mri)) {
    require_file(f.wscores(), "w-score table (run the wscore stage first)");
    d.wscores = harmonize::read_wscores_csv(f.wscores());
    for (std::size_t i = 0; i < d.wscores->subject_ids.size(); ++i)
      if (!d.wscores->missing[i]) mri_ids.push_back(d.wscores->subject_ids[i]);
    covariates = cohort::read_covariates_csv(c.inputs.covariates);
  }
  const auto timelines = cohort::read_timelines_csv(c.inputs.timelines);
  d.cohort = cohort::build_cohort(timelines, covariates, geno_ids, mri_ids);
  return d;
}

bool usable(const PipelineConfig& c, const cohort::CohortSubject& s) {
  return (!c.needs(Modality::genetic) || s.genotype_row) && (!c.needs(Modality::mri) || s.mri_row);
}

// sNC / sDAT subjects with every block the run uses, sorted by id.
std::vector<ensemble::Subject> training_subjects(const PipelineConfig& c, const Data& d) {
  std::vector<ensemble::Subject> out;
  for (const auto& s : d.cohort.subjects)
    if (is_training_stratum(s.label.stratum) && usable(c, s)) out.push_back({s.subject_id, s.label.stratum});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

// Every subject outside the training strata, sorted by id.
std::vector<ensemble::Subject> testing_subjects(const Data& d) {
  std::vector<ensemble::Subject> out;
  for (const auto& s : d.cohort.subjects)
    if (!is_training_stratum(s.label.stratum)) out.push_back({s.subject_id, s.label.stratum});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return out;
}

// ---- stages ----------------------------------------------------------------

void stage_qc(const PipelineConfig& c, const Files& f) {
  if (!c.needs(Modality::genetic)) return;
  const auto matrix = plink::read_bed_trio(plink::BedPaths::from_prefix(c.inputs.genotype_prefix));
  const auto recoded = plink::recode_minor_allele(matrix);
  auto result = qc::run_qc_pipeline(recoded, c.qc, c.seed);
  if (result.report.empty_result) throw ValidationError("genotype QC removed every SNP or every subject");

  json alleles = json::object();
  for (std::size_t j = 0; j < result.genotypes.feature_count(); ++j)
    if (result.genotypes.kinds[j] == plink::FeatureKind::snp)
      alleles[result.genotypes.feature_ids[j]] = result.genotypes.minor_alleles[j];

  json report = io::to_json(result.report);
  if (!c.inputs.apoe.empty()) {
    // APOE is appended after QC so the filters never touch it.
    auto merged = plink::append_apoe(result.genotypes, plink::read_apoe_csv(c.inputs.apoe));
    result.genotypes = std::move(merged.genotypes);
    report["apoe_missing_subjects"] = merged.missing_subjects;
  }
  fs::create_directories(f.layout.intermediate());
  plink::write_recoded(result.genotypes, f.genotypes());
  io::write_json(report, f.qc_report());
  io::write_json(alleles, f.minor_alleles());
}

void stage_wscore(const PipelineConfig& c, const Files& f) {
  if (!c.needs(Modality::mri)) return;
  const auto volumes = harmonize::read_volumes_csv(c.inputs.volumes);
  const auto covariates = cohort::read_covariates_csv(c.inputs.covariates);
  const auto timelines = cohort::read_timelines_csv(c.inputs.timelines);
  std::vector<std::string> reference;
  const std::set<std::string> have(volumes.subject_ids.begin(), volumes.subject_ids.end());
  for (const auto& tl : timelines)
    if (have.count(tl.subject_id) && cohort::stratify(tl).stratum == cohort::Stratum::sNC)
      reference.push_back(tl.subject_id);
  std::sort(reference.begin(), reference.end());
  const auto model = harmonize::fit_glm(volumes, covariates, reference);
  const auto w = harmonize::compute_wscores(volumes, covariates, model);
  fs::create_directories(f.layout.intermediate());
  io::write_json(io::to_json(model), f.glm());
  harmonize::write_wscores_csv(w, f.wscores());
}

std::vector<std::size_t> rows_of(std::span<const std::string> ids,
                                 std::optional<std::size_t> (ensemble::FeatureSource::*lookup)(const std::string&) const,
                                 const ensemble::FeatureSource& source) {
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (const auto& id : ids) rows.push_back(*(source.*lookup)(id));
  return rows;
}

Eigen::VectorXd class_labels(std::size_t n_neg, std::size_t n_pos) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(n_neg + n_pos));
  y.head(static_cast<Eigen::Index>(n_neg)).setConstant(-1.0);
  y.tail(static_cast<Eigen::Index>(n_pos)).setConstant(1.0);
  return y.array() - y.mean();
}

std::vector<std::string> select_subset(const PipelineConfig& c, const ensemble::FeatureSource& source,
                                       const featsel::SubBag& bag, Modality block, bool& short_of_k) {
  const std::size_t k = c.k_per_modality;
  if (block == Modality::genetic) {
    const auto& g = *source.genotypes();
    const auto neg = rows_of(bag.negative, &ensemble::FeatureSource::genotype_row, source);
    const auto pos = rows_of(bag.positive, &ensemble::FeatureSource::genotype_row, source);
    if (c.selector == Selector::fisher_ttest) {
      const auto scores = featsel::score_genetic(g, neg, pos);
      return featsel::select_per_subset(scores, k);
    }
    std::vector<std::size_t> rows = neg;
    rows.insert(rows.end(), pos.begin(), pos.end());
    Eigen::MatrixXd x = featsel::genetic_design(g, rows);
    featsel::standardize_columns(x);
    const auto ids = source.feature_ids(Modality::genetic);
    auto sel = featsel::lasso_select(x, class_labels(neg.size(), pos.size()), ids, k);
    short_of_k = short_of_k || sel.short_of_k;
    return sel.feature_ids;
  }
  const auto& w = *source.wscores();
  const auto neg = rows_of(bag.negative, &ensemble::FeatureSource::wscore_row, source);
  const auto pos = rows_of(bag.positive, &ensemble::FeatureSource::wscore_row, source);
  const auto ids = source.feature_ids(Modality::mri);
  if (c.selector == Selector::fisher_ttest) {
    const auto scores = featsel::score_continuous(w.scores, ids, neg, pos);
    return featsel::select_per_subset(scores, k);
  }
  std::vector<std::size_t> rows = neg;
  rows.insert(rows.end(), pos.begin(), pos.end());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), w.scores.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = w.scores.row(static_cast<Eigen::Index>(rows[i]));
  featsel::standardize_columns(x);
  auto sel = featsel::lasso_select(x, class_labels(neg.size(), pos.size()), ids, k);
  short_of_k = short_of_k || sel.short_of_k;
  return sel.feature_ids;
}

void stage_select(const PipelineConfig& c, const Files& f) {
  const auto d = load_data(c, f);
  const ensemble::FeatureSource source(d.genotypes ? &*d.genotypes : nullptr, d.wscores ? &*d.wscores : nullptr);
  const auto train = training_subjects(c, d);
  std::vector<std::string> neg, pos;
  for (const auto& s : train) (s.stratum == cohort::Stratum::sNC ? neg : pos).push_back(s.id);

  std::optional<featsel::FeatureSet> fixed;
  if (!c.fixed_features.empty()) {
    const auto available = source.feature_ids(Modality::combined);
    const std::set<std::string> have(available.begin(), available.end());
    std::vector<std::string> missing;
    for (const auto& id : c.fixed_features)
      if (!have.count(id)) missing.push_back(id);
    if (!missing.empty())
      throw ValidationError(fmt::format("fixed features not found in the data: {}", fmt::join(missing, ", ")));
    fixed = featsel::fixed_feature_set(c.fixed_features, fixed_modality(c.fixed_features));
  }

  fs::create_directories(f.layout.intermediate());
  for (std::size_t r = 0; r < c.repetitions; ++r) {
    const auto rep_seed = repetition_seed(c, r);
    const auto plan =
        featsel::make_subbag_plan(neg, pos, c.f_subsets, c.sampling_ratio, derive_seed(rep_seed, "plan"));
    io::write_json(io::to_json(plan), f.plan(r));
    if (fixed) {
      io::write_json(io::to_json(*fixed), f.features(fixed->modality, r));
      continue;
    }
    std::map<Modality, featsel::FeatureSet> sets;
    for (auto block : {Modality::genetic, Modality::mri}) {
      if (!c.needs(block)) continue;
      std::vector<std::vector<std::string>> per_subset;
      bool short_of_k = false;
      for (const auto& bag : plan.subsets) per_subset.push_back(select_subset(c, source, bag, block, short_of_k));
      io::write_json({{"modality", featsel::to_string(block)}, {"selector", to_string(c.selector)},
                      {"subsets", per_subset}},
                     f.selections(block, r));
      auto set = featsel::aggregate_frequency(per_subset, c.k_per_modality,
                                              derive_seed(rep_seed, std::string("aggregate.") + featsel::to_string(block)),
                                              block);
      if (short_of_k)
        set.warnings.push_back(fmt::format("LASSO activated fewer than {} features in at least one subset",
                                           c.k_per_modality));
      sets.emplace(block, std::move(set));
    }
    for (auto m : c.modalities) {
      const auto set = m == Modality::combined
                           ? featsel::combine_modalities(sets.at(Modality::genetic), sets.at(Modality::mri))
                           : sets.at(m);
      io::write_json(io::to_json(set), f.features(m, r));
    }
  }
}

void stage_train(const PipelineConfig& c, const Files& f) {
  const auto d = load_data(c, f);
  const ensemble::FeatureSource source(d.genotypes ? &*d.genotypes : nullptr, d.wscores ? &*d.wscores : nullptr);
  for (std::size_t r = 0; r < c.repetitions; ++r) {
    require_file(f.plan(r), "subset plan (run the select stage first)");
    const auto plan = io::subbag_plan_from_json(io::read_json(f.plan(r)));
    for (auto m : effective_modalities(c)) {
      require_file(f.features(m, r), "feature set (run the select stage first)");
      const auto features = io::feature_set_from_json(io::read_json(f.features(m, r)));
      const auto model = ensemble::train_ensemble(source, features, plan, c.mkl);
      io::write_json(io::to_json(model), f.ensemble(m, r));
    }
  }
}

void stage_score(const PipelineConfig& c, const Files& f) {
  const auto d = load_data(c, f);
  const ensemble::FeatureSource source(d.genotypes ? &*d.genotypes : nullptr, d.wscores ? &*d.wscores : nullptr);
  const auto train = training_subjects(c, d);
  const auto test = testing_subjects(d);
  for (std::size_t r = 0; r < c.repetitions; ++r) {
    for (auto m : effective_modalities(c)) {
      require_file(f.ensemble(m, r), "ensemble model (run the train stage first)");
      const auto model = io::ensemble_from_json(io::read_json(f.ensemble(m, r)));
      auto table = ensemble::score_oob(model, source, train, c.threshold);
      const auto unseen = ensemble::score_unseen(model, source, test, c.threshold);
      table.rows.insert(table.rows.end(), unseen.rows.begin(), unseen.rows.end());
      ensemble::write_scores_csv(table, f.scores(m, r));
    }
  }
}

void write_bundle_manifest(const PipelineConfig& c, const Files& f, std::optional<Stage> failed,
                           const std::string& message) {
  report::RunManifest man;
  man.config_hash = config_hash(c);
  try {
    man.input_digests = input_digests(c);
  } catch (const Error&) {
    // A missing input is reported through the failure fields.
  }
  man.versions = report::library_versions();
  fs::create_directories(f.layout.report());
  man.artifacts = report::digest_directory(f.layout.report());
  for (auto s : kAllStages)
    if (fs::is_regular_file(f.marker(s))) man.stages_completed.push_back(to_string(s));
  if (failed) {
    man.failed_stage = to_string(*failed);
    man.failure_message = message;
  }
  report::write_manifest(man, f.layout.report() / "manifest.json");
}

void stage_evaluate(const PipelineConfig& c, const Files& f) {
  const auto result = load_results(c);
  const auto dir = f.layout.report();
  fs::create_directories(dir);
  for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path());
  report::write_report(c, result, dir);
  if (fs::is_regular_file(f.qc_report())) fs::copy_file(f.qc_report(), dir / "qc_report.json");
}

}  // namespace

void run_stage(const PipelineConfig& config, Stage stage, const RunOptions& options) {
  (void)options;
  config.validate();
  check_inputs(config);
  const Files f{Layout{config.output_dir}};
  switch (stage) {
    case Stage::qc: stage_qc(config, f); break;
    case Stage::wscore: stage_wscore(config, f); break;
    case Stage::select: stage_select(config, f); break;
    case Stage::train: stage_train(config, f); break;
    case Stage::score: stage_score(config, f); break;
    case Stage::evaluate: stage_evaluate(config, f); break;
  }
  fs::create_directories(f.layout.intermediate());
  write_marker(f, stage, marker_token(config));
  if (stage == Stage::evaluate) write_bundle_manifest(config, f, std::nullopt, {});
}

RunResult run(const PipelineConfig& config, const RunOptions& options) {
  config.validate();
  const Files f{Layout{config.output_dir}};
  std::optional<Stage> current;
  json timings = json::object();
  try {
    check_inputs(config);
    const auto token = marker_token(config);
    bool reuse = options.resume;
    for (auto s : kAllStages) {
      current = s;
      if (reuse && marker_matches(f, s, token)) {
        timings[to_string(s)] = "skipped";
        continue;
      }
      reuse = false;  // everything downstream of a rerun stage reruns too
      std::error_code ec;
      fs::remove(f.marker(s), ec);
      const auto t0 = std::chrono::steady_clock::now();
      switch (s) {
        case Stage::qc: stage_qc(config, f); break;
        case Stage::wscore: stage_wscore(config, f); break;
        case Stage::select: stage_select(config, f); break;
        case Stage::train: stage_train(config, f); break;
        case Stage::score: stage_score(config, f); break;
        case Stage::evaluate: stage_evaluate(config, f); break;
      }
      fs::create_directories(f.layout.intermediate());
      write_marker(f, s, token);
      timings[to_string(s)] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    current.reset();
    write_bundle_manifest(config, f, std::nullopt, {});
  } catch (const Error& e) {
    fs::create_directories(config.output_dir);
    if (current) {
      try {
        write_bundle_manifest(config, f, current, e.what());
      } catch (const Error&) {
      }
    }
    throw;
  }
  fs::create_directories(config.output_dir);
  io::write_json(timings, f.layout.timings());
  return load_results(config);
}

RunResult load_results(const PipelineConfig& config) {
  const Files f{Layout{config.output_dir}};
  RunResult result;
  for (std::size_t r = 0; r < config.repetitions; ++r) {
    RepetitionResult rep;
    rep.seed = repetition_seed(config, r);
    require_file(f.plan(r), "subset plan");
    rep.plan = io::subbag_plan_from_json(io::read_json(f.plan(r)));
    for (auto m : effective_modalities(config)) {
      ModalityResult mr;
      require_file(f.features(m, r), "feature set");
      mr.features = io::feature_set_from_json(io::read_json(f.features(m, r)));
      require_file(f.scores(m, r), "score table");
      const auto all = ensemble::read_scores_csv(f.scores(m, r));
      mr.train_scores.modality = mr.test_scores.modality = m;
      mr.train_scores.threshold = mr.test_scores.threshold = config.threshold;
      for (const auto& row : all.rows)
        (row.stratum && is_training_stratum(*row.stratum) ? mr.train_scores : mr.test_scores).rows.push_back(row);
      mr.train_scores = ensemble::threshold_labels(std::move(mr.train_scores), config.threshold);
      mr.test_scores = ensemble::threshold_labels(std::move(mr.test_scores), config.threshold);
      mr.train_metrics = metrics::confusion_metrics(mr.train_scores);
      mr.test_metrics = metrics::confusion_metrics(mr.test_scores);
      if (r == 0)
        for (const auto& w : mr.features.warnings)
          result.warnings.push_back(fmt::format("{}: {}", featsel::to_string(m), w));
      rep.modalities.emplace(m, std::move(mr));
    }
    result.repetitions.push_back(std::move(rep));
  }
  return result;
}

ScoreResult score_new_subjects(const fs::path& run_dir, Modality modality, const NewSubjectInputs& inputs,
                               double threshold) {
  const Files f{Layout{run_dir}};
  require_file(f.ensemble(modality, 0), "trained ensemble");
  const auto model = io::ensemble_from_json(io::read_json(f.ensemble(modality, 0)));
  const auto ids = model.feature_set.ids();
  bool need_g = false, need_m = false, need_apoe = false;
  for (const auto& id : ids) {
    if (featsel::modality_of(id) == Modality::genetic) {
      need_g = true;
      const auto raw = featsel::strip_namespace(id);
      need_apoe = need_apoe || std::find(plink::kApoeFeatureIds.begin(), plink::kApoeFeatureIds.end(), raw) !=
                                   plink::kApoeFeatureIds.end();
    } else {
      need_m = true;
    }
  }

  std::optional<plink::RecodedGenotypes> genotypes;
  std::optional<harmonize::WScoreTable> wscores;
  if (need_g) {
    if (inputs.genotype_prefix.empty())
      throw ValidationError("this model uses genetic features; a genotype prefix is required");
    const auto alleles_json = io::read_json(f.minor_alleles());
    const auto alleles = alleles_json.get<std::map<std::string, std::string>>();
    auto g = plink::recode_with_alleles(plink::read_bed_trio(plink::BedPaths::from_prefix(inputs.genotype_prefix)),
                                        alleles);
    if (need_apoe) {
      if (inputs.apoe.empty()) throw ValidationError("this model uses APOE features; an APOE table is required");
      g = plink::append_apoe(g, plink::read_apoe_csv(inputs.apoe)).genotypes;
    }
    genotypes = std::move(g);
  }
  if (need_m) {
    if (inputs.volumes.empty() || inputs.covariates.empty())
      throw ValidationError("this model uses MRI features; volumes and covariates are required");
    const auto glm = io::glm_from_json(io::read_json(f.glm()));
    wscores = harmonize::compute_wscores(harmonize::read_volumes_csv(inputs.volumes),
                                         cohort::read_covariates_csv(inputs.covariates), glm);
  }
  const ensemble::FeatureSource source(genotypes ? &*genotypes : nullptr, wscores ? &*wscores : nullptr);

  const auto available = source.feature_ids(Modality::combined);
  const std::set<std::string> have(available.begin(), available.end());
  std::vector<std::string> missing;
  for (const auto& id : ids)
    if (!have.count(id)) missing.push_back(id);
  if (!missing.empty())
    throw ValidationError(fmt::format("the new data lacks model features: {}", fmt::join(missing, ", ")));

  std::set<std::string> subject_ids;
  if (genotypes) subject_ids.insert(genotypes->subject_ids.begin(), genotypes->subject_ids.end());
  if (wscores) subject_ids.insert(wscores->subject_ids.begin(), wscores->subject_ids.end());
  std::vector<ensemble::Subject> subjects;
  for (const auto& id : subject_ids) subjects.push_back({id, std::nullopt});

  std::set<std::string> trained;
  for (const auto& bag : model.plan.subsets) {
    trained.insert(bag.negative.begin(), bag.negative.end());
    trained.insert(bag.positive.begin(), bag.positive.end());
  }
  ScoreResult out;
  for (const auto& s : subjects)
    if (trained.count(s.id))
      out.warnings.push_back(fmt::format(
          "subject '{}' was in the training data; its score uses every member, not out-of-bag members", s.id));
  out.table = ensemble::score_unseen(model, source, subjects, threshold);
  return out;
}

}  // namespace datscore::pipeline
