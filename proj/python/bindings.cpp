// Python bindings for the main library operations.

#include <optional>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mcvae/experiments.hpp"

namespace py = pybind11;
using namespace mcvae;

namespace {

std::vector<survival::Outcome> outcomes(const std::vector<double>& times, const std::vector<int>& events) {
  if (times.size() != events.size()) throw std::invalid_argument("times and events differ in length");
  std::vector<survival::Outcome> out(times.size());
  for (std::size_t i = 0; i < times.size(); ++i) out[i] = {times[i], static_cast<std::uint8_t>(events[i] != 0)};
  return out;
}

stats::Alternative alternative(const std::string& name) {
  if (name == "greater") return stats::Alternative::kGreater;
  if (name == "less") return stats::Alternative::kLess;
  if (name == "two-sided") return stats::Alternative::kTwoSided;
  throw std::invalid_argument("alternative must be 'greater', 'less' or 'two-sided'");
}

stats::FoldResults table(const std::vector<std::vector<double>>& rows) {
  stats::FoldResults r;
  if (rows.empty()) throw std::invalid_argument("need at least one block");
  for (std::size_t j = 0; j < rows.front().size(); ++j) r.configurations.push_back(std::to_string(j));
  for (std::size_t i = 0; i < rows.size(); ++i) r.blocks.push_back(std::to_string(i));
  r.values = rows;
  return r;
}

py::dict record_dict(const experiments::RunRecord& r) {
  py::dict d;
  d["kind"] = std::string(experiments::kind_name(r.kind));
  d["config"] = r.config_id;
  d["fold"] = r.fold;
  d["seed"] = r.seed;
  d["c_index"] = r.failed() ? py::object(py::none()) : py::object(py::float_(r.c_index));
  d["epochs"] = r.epochs;
  d["wall_seconds"] = r.wall_seconds;
  d["mean_available"] = r.mean_available;
  d["error"] = r.error;
  return d;
}

/// A trained or freshly initialized model together with its training config.
struct PyModel {
  training::TrainConfig config;
  McvaeModel model;
};

}  // namespace

PYBIND11_MODULE(_mcvae, m) {
  m.doc() = "Multimodal contrastive VAE for survival prediction with missing modalities";

  py::register_exception<data::DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<training::TrainingError>(m, "TrainingError", PyExc_RuntimeError);
  py::register_exception<experiments::ExperimentError>(m, "ExperimentError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_ValueError);

  py::class_<data::Cohort>(m, "Cohort")
      .def_property_readonly("size", &data::Cohort::size)
      .def("__len__", &data::Cohort::size)
      .def_readonly("dims", &data::Cohort::dims)
      .def_property_readonly("censoring_rate", &data::Cohort::censoring_rate)
      .def_property_readonly("times",
                             [](const data::Cohort& c) {
                               std::vector<double> t;
                               for (const auto& r : c.records) t.push_back(r.time);
                               return t;
                             })
      .def_property_readonly("events",
                             [](const data::Cohort& c) {
                               std::vector<int> e;
                               for (const auto& r : c.records) e.push_back(r.event);
                               return e;
                             })
      .def_property_readonly("available",
                             [](const data::Cohort& c) {
                               std::vector<std::array<int, 4>> a;
                               for (const auto& r : c.records) a.push_back({r.available[0], r.available[1], r.available[2], r.available[3]});
                               return a;
                             })
      .def_property_readonly("oracle_log_hazard",
                             [](const data::Cohort& c) {
                               std::vector<std::optional<double>> o;
                               for (const auto& r : c.records) o.push_back(r.oracle_log_hazard);
                               return o;
                             })
      .def("features", [](const data::Cohort& c, std::size_t i, std::size_t k) { return c.records.at(i).features.at(k); },
           py::arg("patient"), py::arg("modality"))
      .def("select", &data::Cohort::select, py::arg("indices"))
      .def("restrict", &data::restrict_modalities, py::arg("codes"))
      .def_property_readonly("mean_available_modalities", &data::mean_available_modalities);

  m.def(
      "generate_cohort",
      [](std::size_t patients, std::uint64_t seed, double censoring_rate, std::size_t factor_dim,
         std::array<std::size_t, 4> dims, std::array<double, 4> missing_rates) {
        data::SyntheticSpec s;
        s.patients = patients;
        s.seed = seed;
        s.censoring_rate = censoring_rate;
        s.factor_dim = factor_dim;
        s.dims = dims;
        s.missing_rates = missing_rates;
        return data::generate_cohort(s);
      },
      py::arg("patients") = 600, py::arg("seed") = 0, py::arg("censoring_rate") = 0.3, py::arg("factor_dim") = 8,
      py::arg("dims") = std::array<std::size_t, 4>{16, 64, 64, 64},
      py::arg("missing_rates") = std::array<double, 4>{0.0, 0.08, 0.03, 0.15});
  m.def("save_cohort", &data::save_cohort, py::arg("path"), py::arg("cohort"));
  m.def(
      "load_cohort", [](const std::filesystem::path& p) { return data::load_cohort(p); }, py::arg("path"));
  m.def(
      "missingness_mask",
      [](const data::Cohort& c, double level, std::uint64_t seed) {
        Rng rng(seed);
        return data::missingness_sweep_mask(c, level, rng);
      },
      py::arg("cohort"), py::arg("level"), py::arg("seed") = 0);
  m.def(
      "modality_dropout_mask",
      [](std::array<int, 4> available, double p_drop, std::uint64_t seed) {
        Rng rng(seed);
        data::Mask a{};
        for (std::size_t k = 0; k < 4; ++k) a[k] = available[k] != 0;
        const auto out = data::modality_dropout_mask(a, p_drop, rng);
        return std::array<int, 4>{out[0], out[1], out[2], out[3]};
      },
      py::arg("available"), py::arg("p_drop"), py::arg("seed") = 0);
  m.def(
      "stratified_folds",
      [](const data::Cohort& c, std::size_t k, std::uint64_t seed) {
        py::list folds;
        for (const auto& f : data::stratified_folds(c, k, seed).folds) {
          py::dict d;
          d["train"] = f.train;
          d["validation"] = f.validation;
          d["test"] = f.test;
          folds.append(d);
        }
        return folds;
      },
      py::arg("cohort"), py::arg("k") = 5, py::arg("seed") = 0);

  m.def(
      "c_index",
      [](const std::vector<double>& risks, const std::vector<double>& times, const std::vector<int>& events) {
        return survival::c_index(risks, outcomes(times, events));
      },
      py::arg("risks"), py::arg("times"), py::arg("events"));
  m.def(
      "cox_loss",
      [](const std::vector<double>& log_hazards, const std::vector<double>& times, const std::vector<int>& events)
          -> std::optional<double> {
        std::vector<std::uint8_t> d;
        for (int e : events) d.push_back(e != 0);
        const auto loss = losses::cox_loss(ad::Tensor::constant({log_hazards.size(), 1}, log_hazards), times, d);
        if (!loss) return std::nullopt;
        return loss->item();
      },
      py::arg("log_hazards"), py::arg("times"), py::arg("events"));
  m.def("beta_schedule", &losses::beta_schedule, py::arg("epoch"), py::arg("warmup_epochs"), py::arg("beta_max"));

  m.def(
      "friedman_test",
      [](const std::vector<std::vector<double>>& rows) {
        const auto r = stats::friedman_test(table(rows));
        return py::make_tuple(r.statistic, r.p_value, r.mean_ranks);
      },
      py::arg("rows"));
  m.def(
      "nemenyi_posthoc",
      [](const std::vector<std::vector<double>>& rows) { return stats::nemenyi_posthoc(table(rows)).p_values; },
      py::arg("rows"));
  m.def(
      "wilcoxon_signed_rank",
      [](const std::vector<double>& d, const std::string& alt) {
        const auto r = stats::wilcoxon_signed_rank(d, alternative(alt));
        py::dict out;
        out["w_plus"] = r.w_plus;
        out["n"] = r.n;
        out["p_value"] = r.p_value;
        out["exact"] = r.exact;
        return out;
      },
      py::arg("differences"), py::arg("alternative") = "greater");
  m.def(
      "holm_adjust", [](const std::vector<double>& p) { return stats::holm_adjust(p); }, py::arg("p_values"));

  m.def(
      "profile", [](const std::string& name) { return training::train_config_json(training::profile(name)); },
      py::arg("name"), "Training defaults as a JSON string.");

  py::class_<PyModel>(m, "Model")
      .def(py::init([](const data::Cohort& cohort, const std::string& config_json, std::uint64_t seed) {
             auto cfg = training::train_config_from_json(config_json.empty() ? "{}" : config_json);
             cfg.seed = seed;
             cfg.validate();
             Rng init(seed, 1);
             return PyModel{cfg, McvaeModel(training::model_config(cfg, cohort.dims), init)};
           }),
           py::arg("cohort"), py::arg("config_json") = "", py::arg("seed") = 0,
           "Fresh model sized for the cohort; config_json overrides the default training options.")
      .def(
          "train",
          [](PyModel& self, const data::Cohort& train_set, const data::Cohort& validation_set) {
            Rng rng(self.config.seed, 2);
            std::vector<std::string> history;
            training::TrainHooks hooks;
            hooks.on_epoch = [&history](const training::EpochRecord& e) {
              history.push_back(training::epoch_record_json(e));
            };
            py::gil_scoped_release release;
            (void)training::train(self.model, train_set, validation_set, self.config, rng, hooks);
            return history;
          },
          py::arg("train"), py::arg("validation"), "Trains with early stopping; returns per-epoch JSON records.")
      .def(
          "predict_risks", [](PyModel& self, const data::Cohort& c) { return training::predict_risks(self.model, c); },
          py::arg("cohort"))
      .def(
          "evaluate", [](PyModel& self, const data::Cohort& c) { return training::evaluate(self.model, c).c_index; },
          py::arg("cohort"))
      .def(
          "save", [](const PyModel& self, const std::filesystem::path& p) {
            save_checkpoint(p, self.model, training::train_config_json(self.config));
          },
          py::arg("path"))
      .def_static(
          "load",
          [](const std::filesystem::path& p) {
            auto loaded = load_checkpoint(p);
            return PyModel{training::train_config_from_json(loaded.metadata_json), std::move(loaded.model)};
          },
          py::arg("path"))
      .def_property_readonly("config_json", [](const PyModel& self) { return training::train_config_json(self.config); })
      .def_property_readonly("parameter_names", [](const PyModel& self) {
        std::vector<std::string> names;
        for (const auto& p : self.model.state()) names.push_back(p.name);
        return names;
      });

  m.def(
      "run_experiment",
      [](const std::string& config_json) {
        const auto cfg = experiments::config_from_json(config_json);
        experiments::ExperimentResult res;
        {
          py::gil_scoped_release release;
          res = experiments::run_experiment(cfg);
        }
        py::list out;
        for (const auto& r : res.records) out.append(record_dict(r));
        return out;
      },
      py::arg("config_json"), "Runs an experiment described by a JSON config; returns its run records.");
  m.def(
      "report", [](const std::filesystem::path& dir) { return experiments::report(dir).text; }, py::arg("directory"));
}
