#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "autohead/error.hpp"
#include "autohead/fusion.hpp"
#include "autohead/metrics.hpp"
#include "autohead/pipeline.hpp"
#include "autohead/report.hpp"

namespace py = pybind11;
using namespace autohead;

namespace {

py::dict report_dict(const metrics::EvalReport& r) {
  py::dict d;
  d["accuracy"] = r.accuracy;
  d["auc"] = r.auc ? py::cast(*r.auc) : py::none();
  d["tpr"] = r.tpr;
  d["tnr"] = r.tnr;
  d["average_accuracy"] = r.average_accuracy;
  d["n_samples"] = r.n_samples;
  return d;
}

}  // namespace

PYBIND11_MODULE(_autohead, m) {
  m.doc() = "CNN pool, CNN-Fusion and Auto-Classifier pipeline";

  py::register_exception<Error>(m, "AutoheadError", PyExc_RuntimeError);

  m.def("roc_auc", [](const std::vector<double>& scores, const std::vector<int>& labels) {
    return metrics::roc_auc(scores, labels);
  }, py::arg("scores"), py::arg("labels"));

  m.def("evaluate_scores", [](const std::vector<double>& scores, const std::vector<int>& truth, double threshold) {
    return report_dict(metrics::evaluate_scores(scores, truth, threshold));
  }, py::arg("scores"), py::arg("truth"), py::arg("threshold") = 0.5);

  m.def("normalize_auc_weights", [](const std::vector<double>& v) {
    fusion::ValidationScores s;
    s.v = v;
    for (std::size_t i = 0; i < v.size(); ++i) s.network_ids.push_back("n" + std::to_string(i));
    return fusion::normalize_auc_weights(s).w;
  }, py::arg("validation_aucs"));

  m.def("fuse_predictions", [](const std::vector<std::vector<double>>& p, const std::vector<double>& weights) {
    if (p.empty()) throw ConfigError("empty prediction matrix");
    fusion::PredictionMatrix mat(p.size(), p.front().size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i].size() != mat.networks) throw ShapeError("ragged prediction matrix");
      for (std::size_t j = 0; j < mat.networks; ++j) mat.at(i, j) = p[i][j];
    }
    fusion::FusionWeights w;
    w.w = weights;
    const auto r = fusion::fuse_predictions(mat, w);
    return py::make_tuple(r.winner, r.scores);
  }, py::arg("p"), py::arg("weights"), "p[i][j] = probability network j assigns to class i");

  m.def("timing_profile", [](const std::vector<double>& t, double t_fusion) {
    const auto p = fusion::timing_profile(t, t_fusion);
    py::dict d;
    d["f_time_parallel"] = p.f_time_parallel;
    d["f_time_serial"] = p.f_time_serial;
    return d;
  }, py::arg("t"), py::arg("t_fusion"));

  py::class_<pipeline::RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def("set", &pipeline::RunConfig::apply_setting, py::arg("key"), py::arg("value"))
      .def("validate", &pipeline::RunConfig::validate)
      .def_static("keys", &pipeline::RunConfig::setting_keys)
      .def_readwrite("out", &pipeline::RunConfig::out)
      .def_readwrite("seed", &pipeline::RunConfig::seed)
      .def_readwrite("workers", &pipeline::RunConfig::workers)
      .def_readwrite("architectures", &pipeline::RunConfig::architectures);

  m.def("gen_data", [](const pipeline::RunConfig& c) { return pipeline::cmd_gen_data(c).dump(); },
        "Returns the manifest as JSON text");
  m.def("train_cnns", [](const pipeline::RunConfig& c) {
    py::list rows;
    for (const auto& r : pipeline::cmd_train_cnns(c)) {
      py::dict d;
      d["problem"] = r.problem;
      d["architecture"] = r.architecture;
      d["validation_auc"] = r.validation_auc;
      d["test"] = report_dict(r.test);
      rows.append(d);
    }
    return rows;
  });
  m.def("fuse", [](const pipeline::RunConfig& c) {
    py::list rows;
    for (const auto& r : pipeline::cmd_fuse(c)) {
      py::dict d;
      d["problem"] = r.problem;
      d["weights"] = r.result.weights.w;
      d["test"] = report_dict(r.result.report);
      rows.append(d);
    }
    return rows;
  });
  m.def("search_head", [](const pipeline::RunConfig& c) {
    py::list rows;
    for (const auto& r : pipeline::cmd_search_head(c)) {
      py::dict d;
      d["problem"] = r.problem;
      d["network"] = r.network;
      d["validation_auc"] = r.validation_auc;
      d["candidates"] = r.board.entries.size();
      d["test"] = report_dict(r.evaluation.report);
      rows.append(d);
    }
    return rows;
  });
  m.def("report", [](const std::filesystem::path& run_dir) {
    const auto r = pipeline::cmd_report(run_dir);
    return py::make_tuple(report::table1_markdown(r), report::table2_markdown(r));
  }, py::arg("run_dir"), "Returns (table1, table2) as markdown");
  m.def("bench", [](const pipeline::RunConfig& c) { return pipeline::cmd_bench(c).dump(); });
}
