#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cdcd/commands.hpp"
#include "cdcd/error.hpp"
#include "cdcd/eval.hpp"

namespace py = pybind11;
using namespace cdcd;

namespace {

TokenSequence seq(std::vector<int> tokens, std::optional<int> label) { return {std::move(tokens), label}; }

RunConfig config_from(const std::vector<std::string>& settings) {
  RunConfig c = default_run_config();
  for (const auto& kv : settings) apply_setting(c, kv);
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Contrastive discrete diffusion core";
  py::register_exception<Error>(m, "CdcdError", PyExc_ValueError);

  py::class_<World>(m, "World")
      .def_readonly("classes", &World::classes)
      .def_readonly("codebook", &World::codebook)
      .def_readonly("length", &World::length)
      .def_readonly("concentration", &World::concentration)
      .def_readonly("class_prior", &World::class_prior)
      .def_readonly("initial", &World::initial)
      .def_readonly("transition", &World::transition)
      .def("id", &World::id);

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("codebook", &Dataset::codebook)
      .def_readonly("length", &Dataset::length)
      .def_readonly("classes", &Dataset::classes)
      .def("__len__", &Dataset::size)
      .def("tokens", [](const Dataset& d) {
        std::vector<std::vector<int>> out;
        for (const auto& x : d.items) out.push_back(x.tokens);
        return out;
      })
      .def("labels", [](const Dataset& d) {
        std::vector<int> out;
        for (const auto& x : d.items) out.push_back(x.label.value_or(-1));
        return out;
      });

  py::class_<Schedule>(m, "Schedule")
      .def_property_readonly("steps", &Schedule::steps)
      .def_property_readonly("codebook", &Schedule::codebook)
      .def_property_readonly("states", &Schedule::states)
      .def("step", &Schedule::step, py::arg("t"), py::arg("source"), py::arg("target"))
      .def("cumulative", &Schedule::cumulative, py::arg("t"), py::arg("source"), py::arg("target"));

  py::class_<Params>(m, "Params")
      .def_readonly("names", &Params::names)
      .def("scalar_count", &Params::scalar_count)
      .def("tensor", [](const Params& p, const std::string& name) { return p.get(name).data; });

  py::class_<TrainingRecord>(m, "TrainingRecord")
      .def_readonly("epoch", &TrainingRecord::epoch)
      .def_readonly("heldout_elbo", &TrainingRecord::heldout_elbo)
      .def_property_readonly("total", [](const TrainingRecord& r) { return r.mean.total; })
      .def_property_readonly("l_cdcd", [](const TrainingRecord& r) { return r.mean.l_cdcd; });

  py::class_<MiEstimate>(m, "MiEstimate")
      .def_readonly("bound", &MiEstimate::bound)
      .def_readonly("standard_error", &MiEstimate::standard_error)
      .def_readonly("proxy", &MiEstimate::proxy);

  py::class_<RunConfig>(m, "RunConfig")
      .def("snapshot", [](const RunConfig& c) { return snapshot(c); });

  m.def("config", &config_from, py::arg("settings") = std::vector<std::string>{},
        "Default run config with key=value overrides applied.");
  m.def("load_config", [](const std::string& path, const std::vector<std::string>& settings) {
    RunConfig c = load_run_config(path, default_run_config());
    for (const auto& kv : settings) apply_setting(c, kv);
    return c;
  }, py::arg("path"), py::arg("settings") = std::vector<std::string>{});

  m.def("make_world", &make_world, py::arg("classes"), py::arg("codebook"), py::arg("length"),
        py::arg("concentration"), py::arg("seed"));
  m.def("sample_dataset", [](const World& w, int per_class, std::uint64_t seed) {
    return sample_dataset(w, per_class, Stream(seed));
  }, py::arg("world"), py::arg("per_class"), py::arg("seed"));
  m.def("true_mutual_information", &true_mutual_information);
  m.def("true_sequence_probability", [](const World& w, std::vector<int> x, int label) {
    return true_sequence_probability(w, x, label);
  });
  m.def("bayes_classify", [](const World& w, std::vector<int> x) { return bayes_classify(w, x); });

  m.def("build_schedule", [](int steps, int codebook, const std::string& kernel, const std::string& shape,
                             double terminal) {
    return build_schedule({steps, codebook, parse_kernel(kernel), parse_schedule_shape(shape), terminal});
  }, py::arg("steps"), py::arg("codebook"), py::arg("kernel") = "mask-uniform", py::arg("shape") = "linear",
        py::arg("terminal") = 1.0);
  m.def("posterior", [](const Schedule& s, std::vector<int> x0, std::vector<int> xt, int t) {
    return posterior(seq(std::move(x0), std::nullopt), seq(std::move(xt), std::nullopt), t, s).data();
  }, py::arg("schedule"), py::arg("x0"), py::arg("xt"), py::arg("t"));
  m.def("infonce", [](double f, std::vector<double> negatives) { return infonce_cdcd(f, negatives); });
  m.def("truncate", [](std::vector<double> d, double r) { return truncate_distribution(d, r); });

  m.def("world_of", &build_world, py::arg("config"));
  m.def("datasets_of", &build_datasets, py::arg("config"), py::arg("world"));
  m.def("schedule_of", [](const RunConfig& c) { return build_schedule(resolved_train_config(c).schedule); });

  m.def("train", [](const RunConfig& c, const Dataset& data, const Dataset& heldout) {
    py::gil_scoped_release release;
    TrainResult r = train(resolved_train_config(c), data, heldout);
    return std::make_pair(std::move(r.params), std::move(r.log.records));
  }, py::arg("config"), py::arg("data"), py::arg("heldout") = Dataset{},
        "Trains a model; returns (params, per-epoch records).");

  m.def("sample", [](const Params& p, const Schedule& s, int label, int count, double truncation,
                     std::uint64_t seed) {
    std::vector<std::vector<int>> out;
    for (auto& x : sample_batch(p, label, s, {truncation, count, seed}, count, Stream(seed))) out.push_back(x.tokens);
    return out;
  }, py::arg("params"), py::arg("schedule"), py::arg("label"), py::arg("count") = 1, py::arg("truncation") = 0.86,
        py::arg("seed") = 0);

  m.def("elbo_nll", [](const Params& p, const Dataset& d, const Schedule& s, std::uint64_t seed) {
    return elbo_nll(p, d, s, Stream(seed));
  }, py::arg("params"), py::arg("data"), py::arg("schedule"), py::arg("seed") = 0);
  m.def("exact_nll", [](const Params& p, std::vector<int> x, int label, const Schedule& s) {
    return exact_nll(p, seq(std::move(x), label), label, s);
  });
  m.def("mi_lower_bound", [](const World& w, const Dataset& d, int negatives, std::uint64_t seed) {
    return mi_lower_bound(RatioSource::Oracle, w, d, negatives, Stream(seed));
  }, py::arg("world"), py::arg("data"), py::arg("negatives"), py::arg("seed") = 0);
  m.def("genre_accuracy", [](const World& w, const Params& p, const Schedule& s, int per_class, double truncation,
                             std::uint64_t seed) {
    return genre_accuracy(w, p, s, {truncation, 1, seed}, per_class, Stream(seed));
  }, py::arg("world"), py::arg("params"), py::arg("schedule"), py::arg("per_class") = 100,
        py::arg("truncation") = 0.86, py::arg("seed") = 0);

  m.def("save_checkpoint", [](const std::filesystem::path& path, const Params& p, const RunConfig& c) {
    save_checkpoint(path, {snapshot(c), p.names, p.tensors});
  });
  m.def("load_checkpoint", [](const std::filesystem::path& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    const RunConfig c = checkpoint_run_config(ckpt);
    return std::make_pair(params_from_checkpoint(resolved_model_config(c), ckpt), c);
  });
  m.def("save_corpus", &save_corpus);
  m.def("load_corpus", &load_corpus);
}
