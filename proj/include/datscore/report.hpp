#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "datscore/pipeline.hpp"

namespace datscore::report {

struct Artifact {
  std::string path;  // relative to the report directory
  std::string sha256;
};

struct RunManifest {
  std::string config_hash;
  std::map<std::string, std::string> input_digests;  // basename -> sha256
  std::vector<Artifact> artifacts;
  std::map<std::string, std::string> versions;
  std::vector<std::string> stages_completed;
  std::optional<std::string> failed_stage;
  std::optional<std::string> failure_message;
};

std::map<std::string, std::string> library_versions();

/// Writes the report tables into `dir` (scores, metrics summary, selection
/// frequencies, stratum accuracies, histograms). Returns the files written.
std::vector<std::string> write_report(const pipeline::PipelineConfig& config,
                                      const pipeline::RunResult& result,
                                      const std::filesystem::path& dir);

// Digests every file in `dir` except manifest.json, in sorted path order.
std::vector<Artifact> digest_directory(const std::filesystem::path& dir);

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace datscore::report
