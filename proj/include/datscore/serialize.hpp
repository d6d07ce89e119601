#pragma once

#include <json.hpp>

#include <filesystem>

#include "datscore/ensemble.hpp"
#include "datscore/featsel.hpp"
#include "datscore/harmonize.hpp"
#include "datscore/metrics.hpp"
#include "datscore/mkl.hpp"
#include "datscore/qc.hpp"
#include "datscore/synth.hpp"

namespace datscore::io {

using json = nlohmann::json;

// Pretty-printed with a trailing newline; the same value always yields the same bytes.
void write_json(const json& j, const std::filesystem::path& path);
json read_json(const std::filesystem::path& path);

json to_json(const qc::QcThresholds& t);
qc::QcThresholds qc_thresholds_from_json(const json& j);
json to_json(const qc::QcReport& r);

json to_json(const harmonize::GlmModel& m);
harmonize::GlmModel glm_from_json(const json& j);

json to_json(const featsel::SubBagPlan& p);
featsel::SubBagPlan subbag_plan_from_json(const json& j);
json to_json(const featsel::FeatureSet& f);
featsel::FeatureSet feature_set_from_json(const json& j);

json to_json(const mkl::MklConfig& c);
mkl::MklConfig mkl_config_from_json(const json& j);
json to_json(const mkl::MklModel& m);
mkl::MklModel mkl_model_from_json(const json& j);

json to_json(const ensemble::EnsembleModel& m);
ensemble::EnsembleModel ensemble_from_json(const json& j);

json to_json(const synth::SynthConfig& c);
synth::SynthConfig synth_config_from_json(const json& j);

json to_json(const metrics::MetricsReport& r);
json to_json(const metrics::PairedTestResult& r);

}  // namespace datscore::io
