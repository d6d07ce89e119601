#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "datscore/digest.hpp"
#include "datscore/error.hpp"
#include "datscore/pipeline.hpp"
#include "datscore/report.hpp"
#include "datscore/serialize.hpp"
#include "datscore/synth.hpp"
#include "datscore/version.hpp"

namespace fs = std::filesystem;
using namespace datscore;

namespace {

std::vector<std::string> read_feature_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot read feature list '{}'", path.string()));
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    ids.push_back(line.substr(b, e - b + 1));
  }
  if (ids.empty()) throw ValidationError(fmt::format("feature list '{}' is empty", path.string()));
  return ids;
}

struct PipelineArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> selector;
  std::optional<std::string> fixed_features;
  std::optional<std::string> output_dir;
};

void add_pipeline_options(CLI::App* cmd, PipelineArgs& a) {
  cmd->add_option("-c,--config", a.config, "Pipeline configuration (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", a.seed, "Master seed (overrides the config)");
  cmd->add_option("--selector", a.selector, "fisher_ttest or lasso (overrides the config)");
  cmd->add_option("--fixed-features", a.fixed_features, "File with one namespaced feature id per line");
  cmd->add_option("-o,--output-dir", a.output_dir, "Output directory (overrides the config)");
}

pipeline::PipelineConfig resolve_config(const PipelineArgs& a) {
  auto j = io::read_json(a.config);
  auto c = pipeline::config_from_json(j, fs::path(a.config).parent_path());
  if (a.seed) c.seed = *a.seed;
  if (a.selector) c.selector = pipeline::parse_selector(*a.selector);
  if (a.fixed_features) c.fixed_features = read_feature_list(*a.fixed_features);
  if (a.output_dir) c.output_dir = *a.output_dir;
  c.validate();
  return c;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

int cmd_simulate(const std::optional<std::string>& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed, bool null_model) {
  auto cfg = null_model ? synth::SynthConfig::null_model() : synth::SynthConfig::defaults();
  if (config_path) {
    auto j = io::read_json(*config_path);
    cfg = io::synth_config_from_json(j);
  }
  if (seed) cfg.seed = *seed;
  cfg.validate();
  const auto data = synth::generate(cfg);
  const auto paths = synth::write_dataset(data, out_dir);

  // A ready-to-run pipeline config pointing at the generated files.
  pipeline::PipelineConfig pc;
  pc.inputs = {paths.genotype_prefix.filename(), paths.volumes.filename(), paths.timelines.filename(),
               paths.covariates.filename(), paths.apoe.filename()};
  pc.output_dir = "run";
  pc.seed = cfg.seed;
  io::write_json(pipeline::to_json(pc), fs::path(out_dir) / "pipeline.json");
  io::write_json(io::to_json(cfg), fs::path(out_dir) / "synth_config.json");

  report::RunManifest man;
  man.config_hash = sha256_hex(io::to_json(cfg).dump());
  man.versions = report::library_versions();
  man.artifacts = report::digest_directory(out_dir);
  man.stages_completed = {"simulate"};
  report::write_manifest(man, fs::path(out_dir) / "manifest.json");
  std::cout << fmt::format("wrote {} subjects, {} SNPs to {}\n", cfg.total_subjects(), cfg.n_snps, out_dir);
  return 0;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"DAT score pipeline: genotype QC, MRI harmonization, feature selection, multi-kernel ensembles"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic cohort with planted effects");
  std::optional<std::string> sim_config;
  std::string sim_out;
  std::optional<std::uint64_t> sim_seed;
  bool sim_null = false;
  sim->add_option("-c,--config", sim_config, "Simulation config (JSON)")->check(CLI::ExistingFile);
  sim->add_option("-o,--out", sim_out, "Output directory")->required();
  sim->add_option("--seed", sim_seed, "Seed (overrides the config)");
  sim->add_flag("--null", sim_null, "No planted genetic or atrophy effects");

  // pipeline stages
  PipelineArgs stage_args;
  std::map<CLI::App*, pipeline::Stage> stage_cmds;
  const std::pair<const char*, pipeline::Stage> stages[] = {
      {"qc", pipeline::Stage::qc},         {"wscore", pipeline::Stage::wscore},
      {"select", pipeline::Stage::select}, {"train", pipeline::Stage::train},
      {"evaluate", pipeline::Stage::evaluate}};
  for (const auto& [name, stage] : stages) {
    auto* cmd = app.add_subcommand(name, fmt::format("Run the {} stage", name));
    add_pipeline_options(cmd, stage_args);
    stage_cmds.emplace(cmd, stage);
  }

  // score: the pipeline stage with --config, new subjects with --model-dir
  auto* score = app.add_subcommand("score", "Score training/testing strata (--config) or new subjects (--model-dir)");
  PipelineArgs score_args;
  std::string model_dir, modality = "combined", out_csv;
  pipeline::NewSubjectInputs new_inputs;
  std::string geno, apoe, vols, covs;
  double threshold = 0.5;
  score->add_option("-c,--config", score_args.config, "Pipeline configuration (JSON)")->check(CLI::ExistingFile);
  score->add_option("--seed", score_args.seed, "Master seed (overrides the config)");
  score->add_option("--selector", score_args.selector, "fisher_ttest or lasso (overrides the config)");
  score->add_option("--fixed-features", score_args.fixed_features, "File with one feature id per line");
  score->add_option("-o,--output-dir", score_args.output_dir, "Output directory (overrides the config)");
  score->add_option("--model-dir", model_dir, "Output directory of a previous run");
  score->add_option("--modality", modality, "genetic, mri or combined");
  score->add_option("--genotypes", geno, "PLINK prefix of the new subjects");
  score->add_option("--apoe", apoe, "APOE table of the new subjects");
  score->add_option("--volumes", vols, "ROI volumes of the new subjects");
  score->add_option("--covariates", covs, "Covariates of the new subjects");
  score->add_option("--threshold", threshold, "DAT+ threshold");
  score->add_option("--out", out_csv, "Score table to write (default: stdout)");

  // run
  auto* run = app.add_subcommand("run", "Run every stage and write the report bundle");
  PipelineArgs run_args;
  bool resume = false;
  add_pipeline_options(run, run_args);
  run->add_flag("--resume", resume, "Skip stages whose intermediates match this config and inputs");

  // config init
  auto* config = app.add_subcommand("config", "Configuration helpers");
  config->require_subcommand(1);
  auto* init = config->add_subcommand("init", "Print the default configuration");
  std::string init_out;
  init->add_option("-o,--out", init_out, "Write to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  if (sim->parsed()) return cmd_simulate(sim_config, sim_out, sim_seed, sim_null);

  for (const auto& [cmd, stage] : stage_cmds) {
    if (!cmd->parsed()) continue;
    const auto cfg = resolve_config(stage_args);
    pipeline::run_stage(cfg, stage);
    if (stage == pipeline::Stage::evaluate) print_warnings(pipeline::load_results(cfg).warnings);
    std::cout << fmt::format("{} stage done: {}\n", cmd->get_name(), cfg.output_dir.string());
    return 0;
  }

  if (score->parsed()) {
    if (!model_dir.empty()) {
      new_inputs = {geno, apoe, vols, covs};
      const auto res =
          pipeline::score_new_subjects(model_dir, featsel::parse_modality(modality), new_inputs, threshold);
      print_warnings(res.warnings);
      if (out_csv.empty()) {
        ensemble::write_scores_csv(res.table, std::cout);
      } else {
        ensemble::write_scores_csv(res.table, out_csv);
      }
      return 0;
    }
    if (score_args.config.empty()) throw ValidationError("score needs either --config or --model-dir");
    const auto cfg = resolve_config(score_args);
    pipeline::run_stage(cfg, pipeline::Stage::score);
    std::cout << fmt::format("score stage done: {}\n", cfg.output_dir.string());
    return 0;
  }

  if (run->parsed()) {
    const auto cfg = resolve_config(run_args);
    const auto result = pipeline::run(cfg, {resume});
    print_warnings(result.warnings);
    std::cout << fmt::format("report written to {}\n", (cfg.output_dir / "report").string());
    return 0;
  }

  if (init->parsed()) {
    const auto text = pipeline::to_json(pipeline::PipelineConfig{}).dump(2) + "\n";
    if (init_out.empty()) {
      std::cout << text;
    } else {
      std::ofstream out(init_out);
      if (!out) throw IoError(fmt::format("cannot write '{}'", init_out));
      out << text;
    }
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
