#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "datscore/ensemble.hpp"
#include "datscore/featsel.hpp"
#include "datscore/metrics.hpp"
#include "datscore/mkl.hpp"
#include "datscore/qc.hpp"
#include "datscore/serialize.hpp"

namespace datscore::pipeline {

enum class Selector { fisher_ttest, lasso };
const char* to_string(Selector s);
Selector parse_selector(std::string_view s);

struct Inputs {
  std::filesystem::path genotype_prefix;
  std::filesystem::path volumes;
  std::filesystem::path timelines;
  std::filesystem::path covariates;
  std::filesystem::path apoe;  // optional
};

struct PipelineConfig {
  Inputs inputs;
  std::filesystem::path output_dir = "datscore_out";
  qc::QcThresholds qc;
  std::size_t f_subsets = 10;
  double sampling_ratio = 0.8;
  std::size_t k_per_modality = 17;
  mkl::MklConfig mkl;
  Selector selector = Selector::fisher_ttest;
  std::vector<featsel::Modality> modalities{featsel::Modality::genetic, featsel::Modality::mri,
                                            featsel::Modality::combined};
  std::uint64_t seed = 0;
  double threshold = 0.5;
  std::size_t repetitions = 10;
  // Namespaced ids (snp:..., roi:...); non-empty skips feature selection.
  std::vector<std::string> fixed_features;

  void validate() const;
  bool needs(featsel::Modality block) const;  // genetic or mri data required
};

io::json to_json(const PipelineConfig& c);
// Relative input paths resolve against `base_dir`.
PipelineConfig config_from_json(const io::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);
// SHA-256 of the canonical config JSON without output_dir.
std::string config_hash(const PipelineConfig& c);

// Layout of the output directory.
struct Layout {
  std::filesystem::path root;
  std::filesystem::path intermediate() const { return root / "intermediate"; }
  std::filesystem::path report() const { return root / "report"; }
  std::filesystem::path timings() const { return root / "timings.json"; }
};

enum class Stage { qc, wscore, select, train, score, evaluate };
const char* to_string(Stage s);
inline constexpr Stage kAllStages[] = {Stage::qc, Stage::wscore, Stage::select,
                                       Stage::train, Stage::score, Stage::evaluate};

struct ModalityResult {
  featsel::FeatureSet features;
  ensemble::DatScoreTable train_scores;  // out-of-bag, sNC / sDAT
  ensemble::DatScoreTable test_scores;   // the other strata
  metrics::MetricsReport train_metrics;
  metrics::MetricsReport test_metrics;
};

struct RepetitionResult {
  std::uint64_t seed = 0;
  featsel::SubBagPlan plan;
  std::map<featsel::Modality, ModalityResult> modalities;
};

struct RunResult {
  std::vector<RepetitionResult> repetitions;
  std::vector<std::string> warnings;
};

struct RunOptions {
  bool resume = false;  // reuse intermediates whose recorded config hash matches
};

/// Executes one stage, reading earlier intermediates from the output directory.
void run_stage(const PipelineConfig& config, Stage stage, const RunOptions& options = {});

/// The full pipeline; writes intermediates, the report bundle and timings.
RunResult run(const PipelineConfig& config, const RunOptions& options = {});

/// Loads what the score stage left behind (for callers that ran stages separately).
RunResult load_results(const PipelineConfig& config);

/// Scores new subjects with a trained ensemble from a previous run's output
/// directory. No diagnosis input is used; subjects the ensemble trained on are
/// scored with every member and reported in `warnings`.
struct NewSubjectInputs {
  std::filesystem::path genotype_prefix;
  std::filesystem::path apoe;
  std::filesystem::path volumes;
  std::filesystem::path covariates;
};

struct ScoreResult {
  ensemble::DatScoreTable table;
  std::vector<std::string> warnings;
};

ScoreResult score_new_subjects(const std::filesystem::path& run_dir, featsel::Modality modality,
                               const NewSubjectInputs& inputs, double threshold = 0.5);

}  // namespace datscore::pipeline
