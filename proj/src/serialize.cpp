#include "datscore/serialize.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "datscore/error.hpp"

namespace datscore::io {

void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << j.dump(2) << '\n';
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read '{}'", path.string()));
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

namespace {

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json vec(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

Eigen::VectorXd vec_from(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number_from(j[i]);
  return v;
}

json mat(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec(m.row(i).transpose()));
  return rows;
}

Eigen::MatrixXd mat_from(const json& j, Eigen::Index cols_if_empty = 0) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : cols_if_empty;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[static_cast<std::size_t>(i)].size()) != cols)
      throw ValidationError("ragged matrix in JSON");
    m.row(i) = vec_from(j[static_cast<std::size_t>(i)]).transpose();
  }
  return m;
}

// Rejects keys a config object does not define, so typos surface early.
void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw ValidationError(fmt::format("{} must be a JSON object", what));
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items())
    if (!ok.count(k)) throw ValidationError(fmt::format("unknown key '{}' in {}", k, what));
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("malformed {}: {}", what, e.what()));
  }
}

}  // namespace

json to_json(const qc::QcThresholds& t) {
  return {{"max_snp_missing_rate", t.max_snp_missing_rate},
          {"max_subject_missing_rate", t.max_subject_missing_rate},
          {"min_maf", t.min_maf},
          {"hwe_alpha", t.hwe_alpha},
          {"het_sd_window", number(t.het_sd_window)}};
}

qc::QcThresholds qc_thresholds_from_json(const json& j) {
  return guarded("qc thresholds", [&] {
    check_keys(j, {"max_snp_missing_rate", "max_subject_missing_rate", "min_maf", "hwe_alpha", "het_sd_window"},
               "qc");
    qc::QcThresholds t;
    read_opt(j, "max_snp_missing_rate", t.max_snp_missing_rate);
    read_opt(j, "max_subject_missing_rate", t.max_subject_missing_rate);
    read_opt(j, "min_maf", t.min_maf);
    read_opt(j, "hwe_alpha", t.hwe_alpha);
    if (j.contains("het_sd_window"))
      t.het_sd_window = j["het_sd_window"].is_null() ? std::numeric_limits<double>::infinity()
                                                     : j["het_sd_window"].get<double>();
    t.validate();
    return t;
  });
}

json to_json(const qc::QcReport& r) {
  auto items = [](const std::vector<qc::DroppedItem>& v) {
    json a = json::array();
    for (const auto& d : v) a.push_back({{"id", d.id}, {"reason", qc::reason_name(d.reason)}, {"value", number(d.value)}});
    return a;
  };
  return {{"dropped_snps", items(r.dropped_snps)},
          {"dropped_subjects", items(r.dropped_subjects)},
          {"per_filter_counts", r.per_filter_counts},
          {"skipped_steps", r.skipped_steps},
          {"seed", r.seed},
          {"empty_result", r.empty_result}};
}

json to_json(const harmonize::GlmModel& m) {
  return {{"design",
           {{"sex", m.design.sex},
            {"field_strength", m.design.field_strength},
            {"scanner", m.design.scanner},
            {"tiv", m.design.tiv}}},
          {"design_columns", m.design_columns},
          {"sex_levels", m.sex_levels},
          {"field_strength_levels", m.field_strength_levels},
          {"scanner_levels", m.scanner_levels},
          {"roi_names", m.roi_names},
          {"coefficients", mat(m.coefficients)},
          {"residual_sd", vec(m.residual_sd)},
          {"reference_subjects", m.reference_subjects}};
}

harmonize::GlmModel glm_from_json(const json& j) {
  return guarded("GLM model", [&] {
    harmonize::GlmModel m;
    const auto& d = j.at("design");
    m.design = {d.at("sex").get<bool>(), d.at("field_strength").get<bool>(), d.at("scanner").get<bool>(),
                d.at("tiv").get<bool>()};
    m.design_columns = j.at("design_columns").get<std::vector<std::string>>();
    m.sex_levels = j.at("sex_levels").get<std::vector<std::string>>();
    m.field_strength_levels = j.at("field_strength_levels").get<std::vector<std::string>>();
    m.scanner_levels = j.at("scanner_levels").get<std::vector<std::string>>();
    m.roi_names = j.at("roi_names").get<std::vector<std::string>>();
    m.coefficients = mat_from(j.at("coefficients"));
    m.residual_sd = vec_from(j.at("residual_sd"));
    m.reference_subjects = j.at("reference_subjects").get<std::vector<std::string>>();
    if (m.coefficients.rows() != static_cast<Eigen::Index>(m.design_columns.size()) ||
        m.coefficients.cols() != static_cast<Eigen::Index>(m.roi_names.size()) ||
        m.residual_sd.size() != static_cast<Eigen::Index>(m.roi_names.size()))
      throw ValidationError("GLM model arrays disagree in shape");
    return m;
  });
}

json to_json(const featsel::SubBagPlan& p) {
  json subsets = json::array();
  for (const auto& b : p.subsets)
    subsets.push_back({{"negative", b.negative},
                       {"positive", b.positive},
                       {"oob_negative", b.oob_negative},
                       {"oob_positive", b.oob_positive}});
  return {{"f_subsets", p.f_subsets}, {"sampling_ratio", p.sampling_ratio}, {"seed", p.seed},
          {"per_class", p.per_class}, {"oob_empty", p.oob_empty},         {"subsets", subsets}};
}

featsel::SubBagPlan subbag_plan_from_json(const json& j) {
  return guarded("sub-bag plan", [&] {
    featsel::SubBagPlan p;
    p.f_subsets = j.at("f_subsets").get<std::size_t>();
    p.sampling_ratio = j.at("sampling_ratio").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.per_class = j.at("per_class").get<std::size_t>();
    p.oob_empty = j.at("oob_empty").get<bool>();
    for (const auto& s : j.at("subsets"))
      p.subsets.push_back({s.at("negative").get<std::vector<std::string>>(),
                           s.at("positive").get<std::vector<std::string>>(),
                           s.at("oob_negative").get<std::vector<std::string>>(),
                           s.at("oob_positive").get<std::vector<std::string>>()});
    if (p.subsets.size() != p.f_subsets) throw ValidationError("sub-bag plan subset count mismatch");
    return p;
  });
}

json to_json(const featsel::FeatureSet& f) {
  json features = json::array();
  for (const auto& s : f.features)
    features.push_back({{"feature_id", s.feature_id},
                        {"frequency", s.frequency},
                        {"source", featsel::to_string(s.source)}});
  return {{"modality", featsel::to_string(f.modality)},
          {"k", f.k},
          {"features", features},
          {"candidate_frequency", f.candidate_frequency},
          {"warnings", f.warnings}};
}

featsel::FeatureSet feature_set_from_json(const json& j) {
  return guarded("feature set", [&] {
    featsel::FeatureSet f;
    f.modality = featsel::parse_modality(j.at("modality").get<std::string>());
    f.k = j.at("k").get<std::size_t>();
    for (const auto& s : j.at("features"))
      f.features.push_back({s.at("feature_id").get<std::string>(), s.at("frequency").get<double>(),
                            featsel::parse_modality(s.at("source").get<std::string>())});
    f.candidate_frequency = j.at("candidate_frequency").get<std::map<std::string, double>>();
    read_opt(j, "warnings", f.warnings);
    return f;
  });
}

json to_json(const mkl::MklConfig& c) {
  std::vector<std::string> kernels;
  for (auto k : c.kernels) kernels.emplace_back(mkl::to_string(k));
  return {{"tau", c.tau}, {"max_iters", c.max_iters}, {"tol", c.tol}, {"kernels", kernels},
          {"normalize", c.normalize}};
}

mkl::MklConfig mkl_config_from_json(const json& j) {
  return guarded("mkl config", [&] {
    check_keys(j, {"tau", "max_iters", "tol", "kernels", "normalize"}, "mkl");
    mkl::MklConfig c;
    read_opt(j, "tau", c.tau);
    read_opt(j, "max_iters", c.max_iters);
    read_opt(j, "tol", c.tol);
    read_opt(j, "normalize", c.normalize);
    if (j.contains("kernels")) {
      c.kernels.clear();
      for (const auto& k : j["kernels"]) c.kernels.push_back(mkl::parse_kernel_kind(k.get<std::string>()));
    }
    c.validate();
    return c;
  });
}

json to_json(const mkl::MklModel& m) {
  std::vector<std::string> blocks;
  for (auto b : m.blocks) blocks.emplace_back(featsel::to_string(b));
  json impute = json::array();
  for (double v : m.impute_values) impute.push_back(number(v));
  json specs = json::array();
  for (const auto& s : m.specs)
    specs.push_back({{"kind", mkl::to_string(s.kind)}, {"block", featsel::to_string(s.block)},
                     {"normalize", s.normalize}});
  return {{"feature_ids", m.feature_ids},
          {"blocks", blocks},
          {"impute_values", impute},
          {"training_subjects", m.training_subjects},
          {"train_x", mat(m.train_x)},
          {"labels", vec(m.labels)},
          {"specs", specs},
          {"scales", m.scales},
          {"tau", m.tau},
          {"alpha", vec(m.fit.alpha)},
          {"beta", vec(m.fit.beta)},
          {"elbo_trace", m.fit.elbo_trace},
          {"converged", m.fit.converged},
          {"iterations", m.fit.iterations}};
}

mkl::MklModel mkl_model_from_json(const json& j) {
  return guarded("mkl model", [&] {
    mkl::MklModel m;
    m.feature_ids = j.at("feature_ids").get<std::vector<std::string>>();
    for (const auto& b : j.at("blocks")) m.blocks.push_back(featsel::parse_modality(b.get<std::string>()));
    for (const auto& v : j.at("impute_values")) m.impute_values.push_back(number_from(v));
    m.training_subjects = j.at("training_subjects").get<std::vector<std::string>>();
    m.train_x = mat_from(j.at("train_x"), static_cast<Eigen::Index>(m.feature_ids.size()));
    m.labels = vec_from(j.at("labels"));
    for (const auto& s : j.at("specs"))
      m.specs.push_back({mkl::parse_kernel_kind(s.at("kind").get<std::string>()),
                         featsel::parse_modality(s.at("block").get<std::string>()), s.at("normalize").get<bool>()});
    m.scales = j.at("scales").get<std::vector<double>>();
    m.tau = j.at("tau").get<double>();
    m.fit.alpha = vec_from(j.at("alpha"));
    m.fit.beta = vec_from(j.at("beta"));
    m.fit.elbo_trace = j.at("elbo_trace").get<std::vector<double>>();
    m.fit.converged = j.at("converged").get<bool>();
    m.fit.iterations = j.at("iterations").get<int>();
    const auto n = static_cast<Eigen::Index>(m.training_subjects.size());
    if (m.train_x.rows() != n || m.fit.alpha.size() != n || m.labels.size() != n ||
        m.train_x.cols() != static_cast<Eigen::Index>(m.feature_ids.size()) ||
        m.blocks.size() != m.feature_ids.size() || m.impute_values.size() != m.feature_ids.size() ||
        m.specs.size() != m.scales.size() || m.fit.beta.size() != static_cast<Eigen::Index>(m.specs.size()))
      throw ValidationError("mkl model arrays disagree in shape");
    return m;
  });
}

json to_json(const ensemble::EnsembleModel& m) {
  json members = json::array();
  for (const auto& mem : m.members) members.push_back(to_json(mem));
  return {{"modality", featsel::to_string(m.modality)},
          {"feature_set", to_json(m.feature_set)},
          {"plan", to_json(m.plan)},
          {"members", members}};
}

ensemble::EnsembleModel ensemble_from_json(const json& j) {
  return guarded("ensemble model", [&] {
    ensemble::EnsembleModel m;
    m.modality = featsel::parse_modality(j.at("modality").get<std::string>());
    m.feature_set = feature_set_from_json(j.at("feature_set"));
    m.plan = subbag_plan_from_json(j.at("plan"));
    for (const auto& mem : j.at("members")) m.members.push_back(mkl_model_from_json(mem));
    if (m.members.size() != m.plan.f_subsets)
      throw ValidationError("ensemble member count does not match its plan");
    return m;
  });
}

json to_json(const synth::SynthConfig& c) {
  json sizes = json::object(), profiles = json::object();
  for (const auto& [s, k] : c.group_sizes) sizes[cohort::to_string(s)] = k;
  for (const auto& [s, p] : c.profiles)
    profiles[cohort::to_string(s)] = {{"genetic_case_fraction", p.genetic_case_fraction},
                                      {"atrophy_fraction", p.atrophy_fraction}};
  return {{"group_sizes", sizes},
          {"profiles", profiles},
          {"n_snps", c.n_snps},
          {"n_causal_snps", c.n_causal_snps},
          {"causal_or", c.causal_or},
          {"maf_range", {c.maf_lo, c.maf_hi}},
          {"causal_maf_range", {c.causal_maf_lo, c.causal_maf_hi}},
          {"genotype_missing_rate", c.genotype_missing_rate},
          {"apoe_e4_or", c.apoe_e4_or},
          {"affected_rois", c.affected_rois},
          {"atrophy_effect", c.atrophy_effect},
          {"noise_cv", c.noise_cv},
          {"screening_visit", c.screening_visit},
          {"seed", c.seed}};
}

synth::SynthConfig synth_config_from_json(const json& j) {
  return guarded("synth config", [&] {
    check_keys(j,
               {"group_sizes", "profiles", "n_snps", "n_causal_snps", "causal_or", "maf_range",
                "causal_maf_range", "genotype_missing_rate", "apoe_e4_or", "affected_rois", "atrophy_effect",
                "noise_cv", "screening_visit", "seed"},
               "synth config");
    auto c = synth::SynthConfig::defaults();
    if (j.contains("group_sizes")) {
      c.group_sizes.clear();
      for (const auto& [k, v] : j["group_sizes"].items()) c.group_sizes[cohort::parse_stratum(k)] = v.get<std::size_t>();
    }
    if (j.contains("profiles"))
      for (const auto& [k, v] : j["profiles"].items()) {
        auto& p = c.profiles[cohort::parse_stratum(k)];
        read_opt(v, "genetic_case_fraction", p.genetic_case_fraction);
        read_opt(v, "atrophy_fraction", p.atrophy_fraction);
      }
    read_opt(j, "n_snps", c.n_snps);
    read_opt(j, "n_causal_snps", c.n_causal_snps);
    read_opt(j, "causal_or", c.causal_or);
    if (j.contains("maf_range")) {
      c.maf_lo = j["maf_range"].at(0).get<double>();
      c.maf_hi = j["maf_range"].at(1).get<double>();
    }
    if (j.contains("causal_maf_range")) {
      c.causal_maf_lo = j["causal_maf_range"].at(0).get<double>();
      c.causal_maf_hi = j["causal_maf_range"].at(1).get<double>();
    }
    read_opt(j, "genotype_missing_rate", c.genotype_missing_rate);
    read_opt(j, "apoe_e4_or", c.apoe_e4_or);
    read_opt(j, "affected_rois", c.affected_rois);
    read_opt(j, "atrophy_effect", c.atrophy_effect);
    read_opt(j, "noise_cv", c.noise_cv);
    read_opt(j, "screening_visit", c.screening_visit);
    read_opt(j, "seed", c.seed);
    c.validate();
    return c;
  });
}

namespace {

json opt(const std::optional<double>& v) { return v ? number(*v) : json(nullptr); }

json cell(const metrics::CellAccuracy& c) {
  return {{"n", c.n}, {"correct", c.correct}, {"accuracy", opt(c.accuracy)}};
}

}  // namespace

json to_json(const metrics::MetricsReport& r) {
  json strata = json::object(), rollups = json::object();
  for (const auto& [s, c] : r.per_stratum) strata[cohort::to_string(s)] = cell(c);
  for (const auto& [name, c] : r.rollups) rollups[name] = cell(c);
  return {{"tp", r.tp},
          {"fp", r.fp},
          {"tn", r.tn},
          {"fn", r.fn},
          {"sensitivity", opt(r.sensitivity)},
          {"specificity", opt(r.specificity)},
          {"accuracy", opt(r.accuracy)},
          {"balanced_accuracy", opt(r.balanced_accuracy)},
          {"auc", opt(r.auc)},
          {"per_stratum", strata},
          {"rollups", rollups}};
}

json to_json(const metrics::PairedTestResult& r) {
  return {{"t", number(r.t_statistic)},
          {"df", r.df},
          {"p_one_sided", number(r.p_one_sided)},
          {"mean_diff", number(r.mean_diff)},
          {"n", r.n},
          {"defined", r.defined},
          {"variant", r.variant == metrics::PairedVariant::per_arm_variance ? "per_arm_variance"
                                                                            : "difference_variance"}};
}

}  // namespace datscore::io
