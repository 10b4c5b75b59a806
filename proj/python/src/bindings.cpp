#include <pybind11/functional.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tsdiff/config.hpp"
#include "tsdiff/data.hpp"
#include "tsdiff/error.hpp"
#include "tsdiff/metrics.hpp"
#include "tsdiff/model.hpp"
#include "tsdiff/oracles.hpp"
#include "tsdiff/sampler.hpp"
#include "tsdiff/training.hpp"

namespace py = pybind11;
using namespace tsdiff;

namespace {

TrainConfig config_from(const std::map<std::string, std::string>& entries) {
  TrainConfig cfg;
  for (const auto& [k, v] : entries) apply_config_entry(cfg, k, v);
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_tsdiff, m) {
  m.doc() = "Latent-diffusion generator for irregular event sequences with missing features";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<UsageError>(m, "UsageError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  py::class_<Event>(m, "Event")
      .def(py::init<>())
      .def(py::init([](double t, std::vector<double> x, std::vector<std::uint8_t> mask) {
             if (mask.empty()) mask.assign(x.size(), 1);
             return Event{t, std::move(x), std::move(mask)};
           }),
           py::arg("t"), py::arg("x"), py::arg("mask") = std::vector<std::uint8_t>{})
      .def_readwrite("t", &Event::t)
      .def_readwrite("x", &Event::x)
      .def_readwrite("mask", &Event::mask)
      .def("observed", &Event::observed)
      .def(py::self == py::self);

  py::class_<EventSequence>(m, "EventSequence")
      .def(py::init<>())
      .def(py::init([](double t_max, std::vector<Event> events) { return EventSequence{t_max, std::move(events)}; }),
           py::arg("t_max"), py::arg("events") = std::vector<Event>{})
      .def_readwrite("t_max", &EventSequence::t_max)
      .def_readwrite("events", &EventSequence::events)
      .def("times", &EventSequence::times)
      .def("validate", &EventSequence::validate)
      .def("__len__", &EventSequence::size)
      .def(py::self == py::self);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<>())
      .def(py::init([](std::vector<EventSequence> s) { return Dataset{std::move(s), {}, 0.0}; }))
      .def_readwrite("sequences", &Dataset::sequences)
      .def_readonly("horizon_variance", &Dataset::horizon_variance)
      .def_property_readonly("mean", [](const Dataset& d) { return d.standardization.mean; })
      .def_property_readonly("stddev", [](const Dataset& d) { return d.standardization.stddev; })
      .def("dim", &Dataset::dim)
      .def("total_events", &Dataset::total_events)
      .def("__len__", [](const Dataset& d) { return d.sequences.size(); })
      .def(py::self == py::self);

  m.def("load_jsonl", &load_jsonl, py::arg("path"));
  m.def("save_jsonl", &save_jsonl, py::arg("path"), py::arg("dataset"));
  m.def("standardize", &standardize, py::arg("dataset"));
  m.def("inverse_standardize", &inverse_standardize, py::arg("dataset"));
  m.def("inject_missing_mcar", &inject_missing_mcar, py::arg("dataset"), py::arg("rate"), py::arg("seed"));

  m.def(
      "gen_oracle",
      [](const std::string& kind, std::size_t n, std::uint64_t seed, double horizon, std::size_t dim,
         std::vector<double> rho, double missing_rate, double rate, double mu, double amplitude, double period,
         double hawkes_mu, double alpha, double beta) {
        OracleSpec spec;
        spec.kind = parse_oracle_kind(kind);
        spec.horizon = horizon;
        spec.dim = dim;
        spec.rho = std::move(rho);
        spec.missing_rate = missing_rate;
        spec.rate = rate;
        spec.mu = mu;
        spec.amplitude = amplitude;
        spec.period = period;
        spec.hawkes_mu = hawkes_mu;
        spec.hawkes_alpha = alpha;
        spec.hawkes_beta = beta;
        std::mt19937_64 rng(seed);
        return gen_oracle(spec, n, rng);
      },
      py::arg("kind"), py::arg("n"), py::arg("seed") = 0, py::arg("horizon") = 10.0, py::arg("dim") = 2,
      py::arg("rho") = std::vector<double>{0.6}, py::arg("missing_rate") = 0.0, py::arg("rate") = 2.0,
      py::arg("mu") = 3.0, py::arg("amplitude") = 1.0, py::arg("period") = 10.0, py::arg("hawkes_mu") = 1.0,
      py::arg("alpha") = 0.5, py::arg("beta") = 1.0);

  m.def("default_config", [] { return config_entries(TrainConfig{}); });

  py::class_<LossBreakdown>(m, "LossBreakdown")
      .def_readonly("l1", &LossBreakdown::l1)
      .def_readonly("l2", &LossBreakdown::l2)
      .def_readonly("l3", &LossBreakdown::l3)
      .def_readonly("l4", &LossBreakdown::l4)
      .def_readonly("total", &LossBreakdown::total);

  py::class_<Model>(m, "Model")
      .def_static(
          "for_dataset",
          [](const Dataset& standardized, const std::map<std::string, std::string>& config) {
            return Model::for_dataset(config_from(config), standardized);
          },
          py::arg("standardized"), py::arg("config") = std::map<std::string, std::string>{})
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save", [](const Model& m, const std::filesystem::path& p) { save_checkpoint(p, m); })
      .def_property_readonly("epoch", [](const Model& m) { return m.epoch; })
      .def_property_readonly("config", [](const Model& m) { return config_entries(m.config); })
      .def(
          "train",
          [](Model& model, const Dataset& standardized, std::size_t epochs,
             std::function<void(std::size_t, const LossBreakdown&)> on_epoch) {
            if (epochs > 0) model.config.epochs = epochs;
            TrainOptions opts;
            opts.on_epoch = std::move(on_epoch);
            py::gil_scoped_release release;
            return train(model, standardized, opts);
          },
          py::arg("standardized"), py::arg("epochs") = 0, py::arg("on_epoch") = nullptr)
      .def(
          "synthesize",
          [](const Model& model, std::size_t n, std::uint64_t seed, bool emit_missing, std::size_t threads) {
            py::gil_scoped_release release;
            return synthesize(model, n, seed, emit_missing, threads).data;
          },
          py::arg("n"), py::arg("seed") = 0, py::arg("emit_missing") = false, py::arg("threads") = 1)
      .def(
          "scores",
          [](const Model& model, const Dataset& raw) {
            Scores s = eval_scores(model, apply_standardization(raw, model.standardization));
            return py::dict(py::arg("temporal") = s.temporal, py::arg("feature") = s.feature);
          },
          py::arg("dataset"));

  m.def("tfc_score", [](const Dataset& d) { return tfc_score(d).score; }, py::arg("dataset"));
  m.def("prd_features", &prd_features, py::arg("dataset"));
  m.def(
      "prd",
      [](const Dataset& real, const Dataset& fake, std::size_t clusters, std::uint64_t seed) {
        PrdOptions opts;
        opts.clusters = clusters;
        opts.seed = seed;
        PrdCurve c = prd_curve(prd_features(real), prd_features(fake), opts);
        return py::dict(py::arg("lambda") = c.lambda, py::arg("precision") = c.precision,
                        py::arg("recall") = c.recall, py::arg("max_precision") = c.max_precision(),
                        py::arg("max_recall") = c.max_recall());
      },
      py::arg("real"), py::arg("fake"), py::arg("clusters") = 20, py::arg("seed") = 0);
  m.def(
      "durations", [](const Dataset& d) { return duration_stats(d, 1).durations; }, py::arg("dataset"));
}
