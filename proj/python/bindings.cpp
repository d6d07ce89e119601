#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "datscore/cohort.hpp"
#include "datscore/error.hpp"
#include "datscore/featsel.hpp"
#include "datscore/metrics.hpp"
#include "datscore/mkl.hpp"
#include "datscore/pipeline.hpp"
#include "datscore/plink_io.hpp"
#include "datscore/qc.hpp"
#include "datscore/serialize.hpp"
#include "datscore/stats.hpp"
#include "datscore/synth.hpp"
#include "datscore/version.hpp"

namespace py = pybind11;
using namespace datscore;

namespace {

py::dict paired_dict(const metrics::PairedTestResult& r) {
  py::dict d;
  d["t"] = r.t_statistic;
  d["df"] = r.df;
  d["p_one_sided"] = r.p_one_sided;
  d["mean_diff"] = r.mean_diff;
  d["n"] = r.n;
  d["defined"] = r.defined;
  return d;
}

metrics::PairedVariant parse_variant(const std::string& v) {
  if (v == "per_arm_variance") return metrics::PairedVariant::per_arm_variance;
  if (v == "difference_variance") return metrics::PairedVariant::difference_variance;
  throw ValidationError("variant must be per_arm_variance or difference_variance");
}

py::list table_rows(const ensemble::DatScoreTable& t) {
  py::list rows;
  for (const auto& r : t.rows) {
    py::dict d;
    d["subject_id"] = r.subject_id;
    d["stratum"] = r.stratum ? py::cast(cohort::to_string(*r.stratum)) : py::none();
    d["score"] = r.score;
    d["n_members"] = r.n_members;
    d["predicted"] = cohort::to_string(r.predicted);
    d["status"] = ensemble::to_string(r.status);
    rows.append(d);
  }
  return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the datscore package";
  m.attr("__version__") = kVersion;

  static py::exception<ValidationError> validation_exc(m, "ValidationError", PyExc_ValueError);
  static py::exception<IoError> io_exc(m, "DatscoreIOError", PyExc_OSError);
  static py::exception<NumericalError> numerical_exc(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValidationError& e) {
      py::set_error(validation_exc, e.what());
    } catch (const IoError& e) {
      py::set_error(io_exc, e.what());
    } catch (const NumericalError& e) {
      py::set_error(numerical_exc, e.what());
    }
  });

  // statistics
  m.def("hwe_exact_test", &qc::hwe_exact_test, py::arg("n_hom_major"), py::arg("n_het"), py::arg("n_hom_minor"),
        "Exact Hardy-Weinberg test p-value.");
  m.def(
      "fisher_exact_test",
      [](const std::array<std::array<std::int64_t, 3>, 2>& table) {
        const auto r = stats::fisher_exact_test(table);
        py::dict d;
        d["p_value"] = r.p_value;
        d["cramers_v"] = r.cramers_v;
        d["collapsed"] = r.collapsed;
        return d;
      },
      py::arg("table"), "Exact test on a 2x3 genotype table.");
  m.def(
      "welch_t_test",
      [](const std::vector<double>& x, const std::vector<double>& y) {
        const auto r = stats::welch_t_test(x, y);
        py::dict d;
        d["t"] = r.t;
        d["df"] = r.df;
        d["p_value"] = r.p_value;
        d["cohens_d"] = r.cohens_d;
        return d;
      },
      py::arg("x"), py::arg("y"));
  m.def("student_t_upper", &stats::student_t_upper, py::arg("t"), py::arg("df"));
  m.def(
      "paired_one_sided_t",
      [](const std::vector<double>& a, const std::vector<double>& b, const std::string& variant) {
        return paired_dict(metrics::paired_one_sided_t(a, b, parse_variant(variant)));
      },
      py::arg("a"), py::arg("b"), py::arg("variant") = "per_arm_variance");
  m.def(
      "auc",
      [](const std::vector<double>& scores, const std::vector<bool>& positive) -> std::optional<double> {
        const std::unique_ptr<bool[]> flags(new bool[positive.size()]);
        for (std::size_t i = 0; i < positive.size(); ++i) flags[i] = positive[i];
        return metrics::auc(scores, std::span<const bool>(flags.get(), positive.size()));
      },
      py::arg("scores"), py::arg("positive"));

  // cohort
  m.def(
      "stratify",
      [](const std::vector<std::tuple<int, std::string, bool>>& visits) {
        cohort::DiagnosisTimeline tl;
        for (const auto& [month, dx, imaging] : visits)
          tl.visits.push_back({month, cohort::parse_diagnosis(dx), imaging});
        const auto label = cohort::stratify(tl);
        return py::make_tuple(cohort::to_string(label.stratum), cohort::to_string(label.trajectory));
      },
      py::arg("visits"), "Stratum and trajectory for (month, diagnosis, is_imaging) visits.");

  // genotypes
  m.def(
      "read_plink",
      [](const std::filesystem::path& prefix) {
        const auto g = plink::recode_minor_allele(plink::read_bed_trio(plink::BedPaths::from_prefix(prefix)));
        py::dict d;
        d["subject_ids"] = g.subject_ids;
        d["snp_ids"] = g.feature_ids;
        d["minor_alleles"] = g.minor_alleles;
        d["values"] = Eigen::MatrixXi(g.values.cast<int>());
        return d;
      },
      py::arg("prefix"), "Reads a PLINK trio and recodes it to minor-allele counts (-1 missing).");

  // feature selection
  m.def(
      "lasso_path",
      [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::size_t k) {
        const auto p = featsel::lasso_path(x, y, k);
        py::dict d;
        d["entry_order"] = p.entry_order;
        d["lambda"] = p.lambda;
        d["lambda_max"] = p.lambda_max;
        d["coefficients"] = p.coefficients;
        d["short_of_k"] = p.short_of_k;
        return d;
      },
      py::arg("x"), py::arg("y"), py::arg("k"));

  // multi-kernel classifier
  py::class_<mkl::MklModel>(m, "MklModel")
      .def_property_readonly("beta", [](const mkl::MklModel& mm) { return mm.fit.beta; })
      .def_property_readonly("elbo_trace", [](const mkl::MklModel& mm) { return mm.fit.elbo_trace; })
      .def_property_readonly("converged", [](const mkl::MklModel& mm) { return mm.fit.converged; })
      .def_property_readonly("feature_ids", [](const mkl::MklModel& mm) { return mm.feature_ids; })
      .def("predict_proba", [](const mkl::MklModel& mm, const Eigen::MatrixXd& x) { return mkl::predict_proba(mm, x); },
           py::arg("x"));
  m.def(
      "fit_mkl",
      [](const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<std::string>& feature_ids,
         const std::string& config_json) {
        const auto cfg = config_json.empty() ? mkl::MklConfig{}
                                             : io::mkl_config_from_json(io::json::parse(config_json));
        std::vector<std::string> subjects;
        for (Eigen::Index i = 0; i < x.rows(); ++i) subjects.push_back("row" + std::to_string(i));
        return mkl::fit_model(x, feature_ids, subjects, y, cfg);
      },
      py::arg("x"), py::arg("y"), py::arg("feature_ids"), py::arg("config_json") = "",
      "Feature ids carry a snp: or roi: prefix; labels are +-1.");

  // synthetic data and the pipeline
  m.def(
      "simulate",
      [](const std::filesystem::path& out_dir, std::uint64_t seed, bool null_model, const std::string& config_json) {
        auto cfg = null_model ? synth::SynthConfig::null_model() : synth::SynthConfig::defaults();
        if (!config_json.empty()) cfg = io::synth_config_from_json(io::json::parse(config_json));
        cfg.seed = seed;
        cfg.validate();
        const auto paths = synth::write_dataset(synth::generate(cfg), out_dir);
        py::dict d;
        d["genotype_prefix"] = paths.genotype_prefix;
        d["volumes"] = paths.volumes;
        d["timelines"] = paths.timelines;
        d["covariates"] = paths.covariates;
        d["apoe"] = paths.apoe;
        d["ground_truth"] = paths.ground_truth;
        return d;
      },
      py::arg("out_dir"), py::arg("seed") = 0, py::arg("null_model") = false, py::arg("config_json") = "");
  m.def("default_config", [] { return pipeline::to_json(pipeline::PipelineConfig{}).dump(); });
  m.def(
      "run_pipeline",
      [](const std::string& config_json, const std::filesystem::path& base_dir, bool resume) {
        const auto cfg = pipeline::config_from_json(io::json::parse(config_json), base_dir);
        pipeline::RunResult result;
        {
          py::gil_scoped_release release;
          result = pipeline::run(cfg, {resume});
        }
        return (cfg.output_dir / "report").string();
      },
      py::arg("config_json"), py::arg("base_dir") = std::filesystem::path{}, py::arg("resume") = false,
      "Runs every stage; returns the report directory.");
  m.def(
      "score_new_subjects",
      [](const std::filesystem::path& run_dir, const std::string& modality, const std::filesystem::path& genotypes,
         const std::filesystem::path& apoe, const std::filesystem::path& volumes,
         const std::filesystem::path& covariates, double threshold) {
        const auto r = pipeline::score_new_subjects(run_dir, featsel::parse_modality(modality),
                                                    {genotypes, apoe, volumes, covariates}, threshold);
        return py::make_tuple(table_rows(r.table), r.warnings);
      },
      py::arg("run_dir"), py::arg("modality") = "combined", py::arg("genotypes") = std::filesystem::path{},
      py::arg("apoe") = std::filesystem::path{}, py::arg("volumes") = std::filesystem::path{},
      py::arg("covariates") = std::filesystem::path{}, py::arg("threshold") = 0.5);
}
