#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "tetra/config.hpp"
#include "tetra/dmad.hpp"
#include "tetra/error.hpp"
#include "tetra/metrics.hpp"
#include "tetra/mining.hpp"
#include "tetra/synthdata.hpp"
#include "tetra/trainer.hpp"

namespace py = pybind11;
using namespace tetra;

namespace {

ScoreProtocol make_protocol(std::optional<std::size_t> nonmated_cap, std::uint64_t seed) {
  ScoreProtocol p;
  p.nonmated_cap = nonmated_cap;
  p.seed = seed;
  return p;
}

py::dict point_to_dict(const OperatingPoint& p) {
  py::dict d;
  d["fmr_target"] = p.fmr_target;
  d["threshold"] = p.threshold;
  d["fmr"] = p.fmr;
  d["fnmr"] = p.fnmr;
  d["iapar"] = p.iapar;
  d["riapar"] = p.riapar;
  return d;
}

py::list report_to_list(const EvalReport& rep) {
  py::list out;
  for (const OperatingPoint& p : rep.points) out.append(point_to_dict(p));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Embedding adapter training and morphing-attack evaluation core";

  py::register_exception<Error>(m, "TetraError");

  m.def("normalize", &normalize, py::arg("v"));
  m.def("sq_dist", &sq_dist, py::arg("a"), py::arg("b"));
  m.def("riapar", &riapar, py::arg("fnmr"), py::arg("iapar"));
  m.def("fuse", &fuse, py::arg("s_fr"), py::arg("s_mad"));
  m.def("logistic", &logistic, py::arg("z"));

  py::class_<EmbeddingSet>(m, "EmbeddingSet")
      .def_readonly("dim", &EmbeddingSet::dim)
      .def("__len__", [](const EmbeddingSet& s) { return s.records.size(); })
      .def("sample_ids",
           [](const EmbeddingSet& s) {
             std::vector<std::string> ids;
             ids.reserve(s.records.size());
             for (const auto& r : s.records) ids.push_back(r.sample_id);
             return ids;
           })
      .def("embedding",
           [](const EmbeddingSet& s, const std::string& sample_id) {
             for (const auto& r : s.records) {
               if (r.sample_id == sample_id) return r.embedding;
             }
             fail(ErrorCode::UnknownSampleId, "unknown sample id '" + sample_id + "'");
           },
           py::arg("sample_id"))
      .def("save", [](const EmbeddingSet& s, const std::string& path) { save_embeddings(s, path); },
           py::arg("path"))
      .def_static("load", [](const std::string& path) { return load_embeddings(path); },
                  py::arg("path"));

  py::class_<Adapter>(m, "Adapter")
      .def_readonly("dim", &Adapter::dim)
      .def_static("init", &init_adapter, py::arg("dim"), py::arg("seed"),
                  py::arg("leaky_slope") = 0.01)
      .def("transform", [](const Adapter& a, const Embedding& e) { return transform(a, e); },
           py::arg("embedding"))
      .def("save", &save_checkpoint, py::arg("path"))
      .def_static("load", &load_checkpoint, py::arg("path"));

  py::class_<ScoreSet>(m, "ScoreSet")
      .def(py::init<>())
      .def_readwrite("mated", &ScoreSet::mated)
      .def_readwrite("nonmated", &ScoreSet::nonmated)
      .def_readwrite("morph", &ScoreSet::morph);

  py::class_<DmadModel>(m, "DmadModel")
      .def("score", &dmad_score, py::arg("suspected"), py::arg("probe"))
      .def("save", &save_dmad, py::arg("path"))
      .def_static("load", &load_dmad, py::arg("path"));

  m.def("default_config_json", [] { return run_config_to_json(default_run_config()); });

  m.def(
      "generate_splits",
      [](const std::string& config_json) {
        const RunConfig cfg = parse_run_config(config_json);
        const SyntheticUniverse universe = generate_universe(cfg.universe);
        const ProtocolSplits splits = split_protocol(universe, cfg.protocol);
        py::dict out;
        out["universe"] = universe.set;
        out["train"] = splits.train;
        out["val"] = splits.val;
        out["test"] = splits.test;
        return out;
      },
      py::arg("config_json"), "Generate a synthetic universe and protocol splits");

  m.def(
      "train_adapter",
      [](const std::string& config_json, const EmbeddingSet& train_set,
         const EmbeddingSet& val_set) {
        const RunConfig cfg = parse_run_config(config_json);
        const TrainResult result = train(cfg.train, train_set, val_set);
        py::list history;
        for (const EpochStats& e : result.history.epochs) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["train_loss"] = e.train_loss;
          d["val_loss"] = e.val_loss;
          d["decayed"] = e.decayed;
          d["stopped"] = e.stopped;
          history.append(d);
        }
        return py::make_tuple(result.best, history);
      },
      py::arg("config_json"), py::arg("train_set"), py::arg("val_set"));

  m.def(
      "score_comparisons",
      [](const EmbeddingSet& set, const Adapter* adapter, std::optional<std::size_t> nonmated_cap,
         std::uint64_t seed) {
        return score_comparisons(adapter, set, make_protocol(nonmated_cap, seed));
      },
      py::arg("set"), py::arg("adapter") = nullptr, py::arg("nonmated_cap") = std::nullopt,
      py::arg("seed") = 0);

  m.def("rates_at_threshold",
        [](const ScoreSet& scores, double tau) {
          const Rates r = rates_at_threshold(scores, tau);
          return py::make_tuple(r.fmr, r.fnmr, r.iapar);
        },
        py::arg("scores"), py::arg("tau"));
  m.def("threshold_at_fmr", &threshold_at_fmr, py::arg("scores"), py::arg("target_fmr"));
  m.def("det_points", &det_points, py::arg("scores"), py::arg("n_points"));
  m.def(
      "build_report",
      [](const ScoreSet& scores, const std::vector<double>& targets) {
        return report_to_list(build_report(scores, targets));
      },
      py::arg("scores"), py::arg("fmr_targets"));

  m.def(
      "train_dmad",
      [](const std::string& config_json, const EmbeddingSet& train_set, std::uint64_t seed) {
        const RunConfig cfg = parse_run_config(config_json);
        const ComparisonPairs pairs = enumerate_pairs(train_set);
        const DmadTrainingData data = dmad_training_features(train_set, pairs);
        return train_dmad(data.bona, data.morph, cfg.dmad, seed);
      },
      py::arg("config_json"), py::arg("train_set"), py::arg("seed") = 7);

  m.def(
      "dmad_scores",
      [](const DmadModel& model, const EmbeddingSet& set, std::optional<std::size_t> nonmated_cap,
         std::uint64_t seed) {
        return dmad_score_pairs(model, set, enumerate_pairs(set, make_protocol(nonmated_cap, seed)));
      },
      py::arg("model"), py::arg("set"), py::arg("nonmated_cap") = std::nullopt,
      py::arg("seed") = 0);

  m.def("fuse_scores", &fuse_scores, py::arg("fr"), py::arg("mad"));

  m.def(
      "evaluate_scenarios",
      [](const ScoreSet& original, const ScoreSet& tetra_scores, const ScoreSet& mad,
         const std::vector<double>& targets) {
        const ScenarioReports reports = evaluate_scenarios(original, tetra_scores, mad, targets);
        py::dict out;
        out["original"] = report_to_list(reports.original);
        out["original_mad"] = report_to_list(reports.original_mad);
        out["tetra"] = report_to_list(reports.tetra);
        out["tetra_mad"] = report_to_list(reports.tetra_mad);
        return out;
      },
      py::arg("original_scores"), py::arg("tetra_scores"), py::arg("mad_scores"),
      py::arg("fmr_targets"));

  m.def(
      "export_difference_vectors",
      [](const EmbeddingSet& set, const std::string& path, const Adapter* adapter,
         std::size_t pairs_per_class, std::uint64_t seed) {
        export_difference_vectors(adapter, set, pairs_per_class, seed, path);
      },
      py::arg("set"), py::arg("path"), py::arg("adapter") = nullptr,
      py::arg("pairs_per_class") = 1000, py::arg("seed") = 0);
}
