#include "datscore/report.hpp"

#include <Eigen/Core>
#include <fmt/format.h>
#include <openssl/opensslv.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include "datscore/csv.hpp"
#include "datscore/digest.hpp"
#include "datscore/error.hpp"
#include "datscore/version.hpp"

namespace datscore::report {

namespace fs = std::filesystem;
using featsel::Modality;
using io::json;

std::map<std::string, std::string> library_versions() {
  return {
      {"datscore", kVersion},
      {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
      {"fmt", fmt::format("{}.{}.{}", FMT_VERSION / 10000, FMT_VERSION / 100 % 100, FMT_VERSION % 100)},
      {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                    NLOHMANN_JSON_VERSION_PATCH)},
      {"openssl", OPENSSL_VERSION_TEXT},
  };
}

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write '{}'", p.string()));
  return out;
}

std::string fmt_opt(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? csv::format_double(*v) : std::string("NA");
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// Sample mean and sd over the finite values; sd is null below two values.
json summary(const std::vector<std::optional<double>>& values) {
  std::vector<double> v;
  for (const auto& x : values)
    if (x && std::isfinite(*x)) v.push_back(*x);
  if (v.empty()) return {{"mean", nullptr}, {"sd", nullptr}, {"n", 0}};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  json sd = nullptr;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    sd = num(std::sqrt(ss / static_cast<double>(v.size() - 1)));
  }
  return {{"mean", num(m)}, {"sd", sd}, {"n", v.size()}};
}

ensemble::DatScoreTable full_table(const pipeline::ModalityResult& mr) {
  auto t = mr.train_scores;
  t.rows.insert(t.rows.end(), mr.test_scores.rows.begin(), mr.test_scores.rows.end());
  return t;
}

json paired(const ensemble::DatScoreTable& a, const ensemble::DatScoreTable& b, cohort::Stratum s,
            metrics::PairedVariant variant) {
  std::map<std::string, double> sb;
  for (const auto* r : b.scored())
    if (r->stratum == s) sb[r->subject_id] = r->score;
  std::map<std::string, std::pair<double, double>> both;
  for (const auto* r : a.scored())
    if (r->stratum == s)
      if (auto it = sb.find(r->subject_id); it != sb.end()) both[r->subject_id] = {r->score, it->second};
  std::vector<double> va, vb;
  for (const auto& [id, p] : both) {
    va.push_back(p.first);
    vb.push_back(p.second);
  }
  if (va.size() < 2) return {{"defined", false}, {"n", va.size()}};
  return io::to_json(metrics::paired_one_sided_t(va, vb, variant));
}

}  // namespace

std::vector<std::string> write_report(const pipeline::PipelineConfig& config, const pipeline::RunResult& result,
                                      const fs::path& dir) {
  if (result.repetitions.empty()) throw ValidationError("no repetitions to report");
  fs::create_directories(dir);
  std::vector<std::string> written;
  const auto& rep0 = result.repetitions.front();

  std::vector<Modality> mods;
  for (const auto& [m, _] : rep0.modalities) mods.push_back(m);

  std::map<Modality, ensemble::DatScoreTable> tables;
  for (auto m : mods) tables[m] = full_table(rep0.modalities.at(m));

  // Per-subject scores.
  for (auto m : mods) {
    const auto name = fmt::format("scores_{}.csv", featsel::to_string(m));
    ensemble::write_scores_csv(tables[m], dir / name);
    written.push_back(name);
  }

  // Selection frequencies: rep-0 candidates plus anything chosen in a later repetition.
  for (auto m : mods) {
    const auto name = fmt::format("selection_frequency_{}.csv", featsel::to_string(m));
    const auto& fs0 = rep0.modalities.at(m).features;
    std::map<std::string, std::size_t> reps_selected;
    for (const auto& rep : result.repetitions)
      for (const auto& id : rep.modalities.at(m).features.ids()) ++reps_selected[id];
    std::map<std::string, double> freq = fs0.candidate_frequency;
    for (const auto& [id, _] : reps_selected) freq.try_emplace(id, 0.0);
    const auto chosen = fs0.ids();
    std::vector<std::pair<std::string, double>> rows(freq.begin(), freq.end());
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    auto out = open_out(dir / name);
    out << "feature_id,source,frequency,selected,repetitions_selected\n";
    for (const auto& [id, f] : rows)
      out << fmt::format("{},{},{},{},{}\n", id, featsel::to_string(featsel::modality_of(id)), csv::format_double(f),
                         std::find(chosen.begin(), chosen.end(), id) != chosen.end() ? 1 : 0,
                         reps_selected.count(id) ? reps_selected[id] : 0);
    written.push_back(name);
  }

  // Accuracy per stratum and rollup group: rep-0 counts plus the spread over repetitions.
  {
    auto out = open_out(dir / "stratum_accuracy.csv");
    out << "modality,group,n,correct,accuracy,mean_accuracy,sd_accuracy\n";
    for (auto m : mods) {
      std::vector<metrics::MetricsReport> per_rep;
      for (const auto& rep : result.repetitions)
        per_rep.push_back(metrics::confusion_metrics(full_table(rep.modalities.at(m))));
      auto row = [&](const std::string& group, const metrics::CellAccuracy& c0,
                     auto&& pick) {
        std::vector<std::optional<double>> acc;
        for (const auto& r : per_rep) acc.push_back(pick(r));
        const auto s = summary(acc);
        out << fmt::format("{},{},{},{},{},{},{}\n", featsel::to_string(m), group, c0.n, c0.correct,
                           fmt_opt(c0.accuracy),
                           s["mean"].is_null() ? "NA" : csv::format_double(s["mean"].get<double>()),
                           s["sd"].is_null() ? "NA" : csv::format_double(s["sd"].get<double>()));
      };
      for (auto s : cohort::kAllStrata) {
        const auto it = per_rep[0].per_stratum.find(s);
        const metrics::CellAccuracy c0 = it == per_rep[0].per_stratum.end() ? metrics::CellAccuracy{} : it->second;
        row(cohort::to_string(s), c0, [s](const metrics::MetricsReport& r) -> std::optional<double> {
          const auto f = r.per_stratum.find(s);
          return f == r.per_stratum.end() ? std::nullopt : f->second.accuracy;
        });
      }
      for (const auto& [group, _] : metrics::rollup_groups()) {
        const auto it = per_rep[0].rollups.find(group);
        const metrics::CellAccuracy c0 = it == per_rep[0].rollups.end() ? metrics::CellAccuracy{} : it->second;
        row(group, c0, [g = group](const metrics::MetricsReport& r) -> std::optional<double> {
          const auto f = r.rollups.find(g);
          return f == r.rollups.end() ? std::nullopt : f->second.accuracy;
        });
      }
    }
    written.push_back("stratum_accuracy.csv");
  }

  // Score histograms, ten bins on [0, 1], rep 0.
  {
    auto out = open_out(dir / "score_histogram.csv");
    out << "modality,stratum,bin_lower,bin_upper,count\n";
    constexpr int kBins = 10;
    for (auto m : mods) {
      for (auto s : cohort::kAllStrata) {
        std::array<std::size_t, kBins> counts{};
        for (const auto* r : tables[m].scored())
          if (r->stratum == s) ++counts[static_cast<std::size_t>(std::clamp(static_cast<int>(r->score * kBins), 0, kBins - 1))];
        for (int b = 0; b < kBins; ++b)
          out << fmt::format("{},{},{},{},{}\n", featsel::to_string(m), cohort::to_string(s),
                             csv::format_double(b / static_cast<double>(kBins)),
                             csv::format_double((b + 1) / static_cast<double>(kBins)), counts[static_cast<std::size_t>(b)]);
      }
    }
    written.push_back("score_histogram.csv");
  }

  // Metrics summary.
  {
    json modalities = json::object();
    for (auto m : mods) {
      const auto& mr = rep0.modalities.at(m);
      std::vector<std::optional<double>> tr_auc, tr_acc, tr_bacc, te_auc, te_acc, te_bacc;
      for (const auto& rep : result.repetitions) {
        const auto& x = rep.modalities.at(m);
        tr_auc.push_back(x.train_metrics.auc);
        tr_acc.push_back(x.train_metrics.accuracy);
        tr_bacc.push_back(x.train_metrics.balanced_accuracy);
        te_auc.push_back(x.test_metrics.auc);
        te_acc.push_back(x.test_metrics.accuracy);
        te_bacc.push_back(x.test_metrics.balanced_accuracy);
      }
      modalities[featsel::to_string(m)] = {
          {"features", mr.features.ids()},
          {"train", io::to_json(mr.train_metrics)},
          {"test", io::to_json(mr.test_metrics)},
          {"over_repetitions",
           {{"train_auc", summary(tr_auc)},
            {"train_accuracy", summary(tr_acc)},
            {"train_balanced_accuracy", summary(tr_bacc)},
            {"test_auc", summary(te_auc)},
            {"test_accuracy", summary(te_acc)},
            {"test_balanced_accuracy", summary(te_bacc)}}},
      };
    }
    json tests = json::array();
    for (std::size_t i = 0; i < mods.size(); ++i)
      for (std::size_t j = i + 1; j < mods.size(); ++j)
        for (auto s : cohort::kAllStrata)
          tests.push_back({{"a", featsel::to_string(mods[i])},
                           {"b", featsel::to_string(mods[j])},
                           {"stratum", cohort::to_string(s)},
                           {"per_arm_variance", paired(tables[mods[i]], tables[mods[j]], s,
                                                       metrics::PairedVariant::per_arm_variance)},
                           {"difference_variance", paired(tables[mods[i]], tables[mods[j]], s,
                                                          metrics::PairedVariant::difference_variance)}});
    const json summary_json = {
        {"threshold", config.threshold},
        {"tie_rule", "score >= threshold is DAT+"},
        {"selector", pipeline::to_string(config.selector)},
        {"repetitions", result.repetitions.size()},
        {"modalities", modalities},
        {"paired_tests", tests},
        {"warnings", result.warnings},
    };
    io::write_json(summary_json, dir / "metrics_summary.json");
    written.push_back("metrics_summary.json");
  }
  return written;
}

std::vector<Artifact> digest_directory(const fs::path& dir) {
  std::vector<Artifact> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).generic_string();
    if (rel == "manifest.json") continue;
    out.push_back({rel, sha256_file(e.path())});
  }
  std::sort(out.begin(), out.end(), [](const Artifact& a, const Artifact& b) { return a.path < b.path; });
  return out;
}

void write_manifest(const RunManifest& m, const fs::path& path) {
  json artifacts = json::array();
  for (const auto& a : m.artifacts) artifacts.push_back({{"path", a.path}, {"sha256", a.sha256}});
  json j = {{"config_hash", m.config_hash},
            {"inputs", m.input_digests},
            {"artifacts", artifacts},
            {"versions", m.versions},
            {"stages_completed", m.stages_completed},
            {"complete", !m.failed_stage.has_value()}};
  if (m.failed_stage) j["failed_stage"] = *m.failed_stage;
  if (m.failure_message) j["failure_message"] = *m.failure_message;
  io::write_json(j, path);
}

RunManifest read_manifest(const fs::path& path) {
  const auto j = io::read_json(path);
  RunManifest m;
  try {
    m.config_hash = j.at("config_hash").get<std::string>();
    m.input_digests = j.at("inputs").get<std::map<std::string, std::string>>();
    for (const auto& a : j.at("artifacts")) m.artifacts.push_back({a.at("path"), a.at("sha256")});
    m.versions = j.at("versions").get<std::map<std::string, std::string>>();
    m.stages_completed = j.at("stages_completed").get<std::vector<std::string>>();
    if (j.contains("failed_stage")) m.failed_stage = j.at("failed_stage").get<std::string>();
    if (j.contains("failure_message")) m.failure_message = j.at("failure_message").get<std::string>();
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return m;
}

}  // namespace datscore::report
