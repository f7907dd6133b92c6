// Command-line front end: cohort generation, single runs, experiments, reports.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mcvae/experiments.hpp"

namespace fs = std::filesystem;
using namespace mcvae;
using namespace mcvae::experiments;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> workers;
  std::string profile;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ExperimentError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Config file (if any) with the profile injected so that its "train"
/// section still overrides the profile values.
ExperimentConfig resolve_config(const CommonOptions& o, std::optional<Kind> kind) {
  nlohmann::json j = nlohmann::json::object();
  if (!o.config.empty()) {
    try {
      j = nlohmann::json::parse(read_text(o.config));
    } catch (const nlohmann::json::parse_error& e) {
      throw ExperimentError(o.config + ": " + e.what());
    }
  }
  if (!o.profile.empty()) j["profile"] = o.profile;
  if (kind) {
    if (j.contains("kind") && j["kind"] != std::string(kind_name(*kind))) {
      throw ExperimentError("config kind '" + j["kind"].get<std::string>() + "' does not match command '" +
                            std::string(kind_name(*kind)) + "'");
    }
    j["kind"] = std::string(kind_name(*kind));
  }
  auto cfg = config_from_json(j.dump());
  if (o.seed) {
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) cfg.seeds[i] = *o.seed + i;
    cfg.dataset.synthetic.seed = *o.seed;
  }
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.workers) cfg.workers = *o.workers;
  return cfg;
}

void add_common(CLI::App* cmd, CommonOptions& o, bool with_workers, bool with_profile) {
  cmd->add_option("--config", o.config, "JSON experiment config")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "base seed");
  cmd->add_option("--out", o.out, "output directory");
  if (with_workers) cmd->add_option("--workers", o.workers, "concurrent runs")->check(CLI::PositiveNumber);
  if (with_profile) cmd->add_option("--profile", o.profile, "training defaults")->check(CLI::IsMember({"luad", "lusc"}));
}

int run_generate(const CommonOptions& o) {
  if (o.out.empty()) throw ExperimentError("generate needs --out <file>");
  auto cfg = resolve_config(o, std::nullopt);
  if (cfg.dataset.path) throw ExperimentError("generate needs a synthetic dataset spec, not a path");
  const auto cohort = data::generate_cohort(cfg.dataset.synthetic);
  data::save_cohort(o.out, cohort);
  std::cout << "wrote " << cohort.size() << " patients (censored " << cohort.censoring_rate() << ") to " << o.out
            << '\n';
  return 0;
}

int run_train(const CommonOptions& o, std::size_t fold) {
  auto cfg = resolve_config(o, Kind::kSurvival);
  cfg.validate();
  if (fold >= cfg.folds) throw ExperimentError("--fold must be below " + std::to_string(cfg.folds));
  const auto seed = cfg.seeds.front();
  const auto cohort = load_dataset(cfg.dataset);
  const auto layout = data::stratified_folds(cohort, cfg.folds, seed);
  const auto& plan = layout.folds[fold];

  auto train_set = cohort.select(plan.train);
  auto val_set = cohort.select(plan.validation);
  auto test_set = cohort.select(plan.test);
  data::RobustScaler scaler;
  scaler.fit(train_set);
  scaler.transform(train_set);
  scaler.transform(val_set);
  scaler.transform(test_set);

  auto tc = cfg.train;
  tc.seed = seed;
  Rng run_rng(seed, fold);
  auto init = run_rng.fork("init");
  McvaeModel model(training::model_config(tc, cohort.dims), init);
  fs::create_directories(cfg.output_dir);
  std::ofstream log(cfg.output_dir / "epochs.jsonl", std::ios::trunc);
  training::TrainHooks hooks;
  hooks.on_epoch = [&log](const training::EpochRecord& e) {
    log << training::epoch_record_json(e) << '\n';
    std::cerr << "epoch " << e.epoch << " loss " << e.loss.total << " val C " << e.validation_c_index << '\n';
  };
  auto train_rng = run_rng.fork("train");
  const auto state = training::train(model, train_set, val_set, tc, train_rng, hooks);
  const auto eval = training::evaluate(model, test_set);
  save_checkpoint(cfg.output_dir / "model.ckpt", model, config_json(cfg));
  std::cout << "epochs " << state.epoch << ", best epoch " << state.best_epoch << ", validation C "
            << state.best_validation << ", test C ";
  if (eval.c_index) {
    std::cout << *eval.c_index << '\n';
  } else {
    std::cout << "undefined (no comparable pair)\n";
  }
  return 0;
}

int run_kind(const CommonOptions& o, Kind kind) {
  const auto cfg = resolve_config(o, kind);
  Progress progress;
  progress.on_record = [](const RunRecord& r) {
    std::cerr << r.config_id << " fold " << r.fold << " seed " << r.seed << ": ";
    if (r.failed()) {
      std::cerr << "failed\n";
    } else {
      std::cerr << "C " << r.c_index << " (" << r.epochs << " epochs, " << r.wall_seconds << " s)\n";
    }
  };
  progress.on_warning = [](const std::string& w) { std::cerr << "warning: " << w << '\n'; };
  const auto res = run_experiment(cfg, progress);
  if (res.resumed) std::cerr << "reused " << res.resumed << " completed runs\n";
  std::cout << std::ifstream(cfg.output_dir / kReportFile).rdbuf();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal contrastive VAE survival experiments"};
  app.require_subcommand(1);

  CommonOptions gen_o, train_o, report_o;
  std::size_t fold = 0;
  auto* gen = app.add_subcommand("generate", "write a synthetic cohort file");
  add_common(gen, gen_o, false, false);
  auto* train = app.add_subcommand("train", "train and evaluate one fold");
  add_common(train, train_o, false, true);
  train->add_option("--fold", fold, "fold index");

  struct KindCommand {
    const char* name;
    const char* help;
    Kind kind;
    CommonOptions options;
    CLI::App* cmd = nullptr;
  };
  std::array<KindCommand, 4> kinds{{
      {"survival", "cross-validated survival runs", Kind::kSurvival, {}},
      {"combinations", "clinical-anchored modality subsets", Kind::kCombinations, {}},
      {"dropout-sweep", "training modality dropout rates", Kind::kDropoutSweep, {}},
      {"missingness-sweep", "train and test missingness levels", Kind::kMissingnessSweep, {}},
  }};
  for (auto& k : kinds) {
    k.cmd = app.add_subcommand(k.name, k.help);
    add_common(k.cmd, k.options, true, true);
  }
  auto* rep = app.add_subcommand("report", "statistics over a results directory");
  rep->add_option("--out", report_o.out, "results directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return run_generate(gen_o);
    if (*train) return run_train(train_o, fold);
    for (auto& k : kinds)
      if (*k.cmd) return run_kind(k.options, k.kind);
    if (*rep) {
      std::cout << report(report_o.out).text;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "mcvae: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
