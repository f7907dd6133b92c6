#include "mcvae/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace mcvae::experiments {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::array<std::pair<Kind, std::string_view>, 4> kKindNames{{
    {Kind::kSurvival, "survival"},
    {Kind::kCombinations, "combinations"},
    {Kind::kDropoutSweep, "dropout-sweep"},
    {Kind::kMissingnessSweep, "missingness-sweep"},
}};

bool is_sweep(Kind kind) { return kind == Kind::kDropoutSweep || kind == Kind::kMissingnessSweep; }

std::string number_id(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string full_precision(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ExperimentError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
      throw ExperimentError("unknown " + where + " option '" + key + "'");
    }
  }
}

json synthetic_json(const data::SyntheticSpec& s) {
  // Explicit loadings and risk weights are programmatic only.
  return {{"patients", s.patients},       {"factor_dim", s.factor_dim},
          {"dims", s.dims},               {"noise", s.noise},
          {"risk_scale", s.risk_scale},   {"baseline_hazard", s.baseline_hazard},
          {"censoring_rate", s.censoring_rate}, {"missing_rates", s.missing_rates},
          {"seed", s.seed}};
}

data::SyntheticSpec synthetic_from_json(const json& j) {
  reject_unknown(j, {"patients", "factor_dim", "dims", "noise", "risk_scale", "baseline_hazard", "censoring_rate",
                     "missing_rates", "seed"},
                 "synthetic dataset");
  data::SyntheticSpec s;
  auto read = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  read("patients", s.patients);
  read("factor_dim", s.factor_dim);
  read("dims", s.dims);
  read("noise", s.noise);
  read("risk_scale", s.risk_scale);
  read("baseline_hazard", s.baseline_hazard);
  read("censoring_rate", s.censoring_rate);
  read("missing_rates", s.missing_rates);
  read("seed", s.seed);
  return s;
}

json config_to_json_object(const ExperimentConfig& cfg) {
  json j;
  j["kind"] = std::string(kind_name(cfg.kind));
  if (cfg.dataset.path) {
    j["dataset"] = {{"path", cfg.dataset.path->string()}};
  } else {
    j["dataset"] = {{"synthetic", synthetic_json(cfg.dataset.synthetic)}};
  }
  j["train"] = json::parse(training::train_config_json(cfg.train));
  j["grid"] = cfg.grid;
  j["combinations"] = cfg.combinations;
  if (cfg.baseline) j["baseline"] = *cfg.baseline;
  j["output_dir"] = cfg.output_dir.string();
  j["seeds"] = cfg.seeds;
  j["folds"] = cfg.folds;
  j["workers"] = cfg.workers;
  return j;
}

/// Fields that change results; resuming requires these to match.
json result_fingerprint(json j) {
  j.erase("workers");
  j.erase("output_dir");
  return j;
}

struct RunParams {
  std::string codes = "CTWM";
  double p_drop = 0.0;
  std::optional<double> missing;
};

RunParams params_for(const ExperimentConfig& cfg, const std::string& id) {
  RunParams p;
  p.p_drop = cfg.train.modality_dropout;
  switch (cfg.kind) {
    case Kind::kSurvival:
      break;
    case Kind::kCombinations: {
      p.codes.clear();
      for (char c : id)
        if (c != '+') p.codes.push_back(c);
      break;
    }
    case Kind::kDropoutSweep:
      p.p_drop = std::stod(id);
      break;
    case Kind::kMissingnessSweep:
      p.p_drop = kMissingnessTrainDropout;
      p.missing = std::stod(id);
      break;
  }
  return p;
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  return s;
}

std::string block_name(std::size_t fold, std::uint64_t seed) {
  return "f" + std::to_string(fold) + "s" + std::to_string(seed);
}

std::string run_key(const std::string& id, std::size_t fold, std::uint64_t seed) {
  return id + "|" + block_name(fold, seed);
}

}  // namespace

std::string_view kind_name(Kind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

Kind parse_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  throw ExperimentError("unknown experiment kind '" + std::string(name) + "'");
}

const std::vector<std::string>& default_combinations() {
  static const std::vector<std::string> combos{"C", "C+T", "C+W", "C+M", "C+T+W", "C+T+M", "C+W+M", "C+T+W+M"};
  return combos;
}

std::vector<double> default_grid(Kind kind) {
  switch (kind) {
    case Kind::kDropoutSweep:
      return {0.0, 0.1, 0.3, 0.5, 0.7, 0.9};
    case Kind::kMissingnessSweep:
      return {0.1, 0.3, 0.5, 0.7, 0.9};
    default:
      return {};
  }
}

void ExperimentConfig::validate() const {
  try {
    train.validate();
    if (!dataset.path) dataset.synthetic.validate();
  } catch (const std::exception& e) {
    throw ExperimentError(e.what());
  }
  if (seeds.empty()) throw ExperimentError("seeds must not be empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ExperimentError("seeds must be distinct");
  }
  if (folds < 2) throw ExperimentError("folds must be at least 2");
  if (workers < 1) throw ExperimentError("workers must be at least 1");
  if (!grid.empty() && !is_sweep(kind)) {
    throw ExperimentError("grid is only meaningful for sweep experiments");
  }
  if (!combinations.empty() && kind != Kind::kCombinations) {
    throw ExperimentError("combinations are only meaningful for the combinations experiment");
  }
  for (double v : grid) {
    if (!(v >= 0.0 && v <= 1.0)) throw ExperimentError("grid value " + number_id(v) + " outside [0, 1]");
  }
  for (const auto& combo : combinations) {
    if (std::find(default_combinations().begin(), default_combinations().end(), combo) ==
        default_combinations().end()) {
      throw ExperimentError("combination '" + combo + "' is not one of C, C+T, ..., C+T+W+M");
    }
  }
  const auto ids = configuration_ids();
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
    throw ExperimentError("configuration ids must be distinct");
  }
  if (baseline && std::find(ids.begin(), ids.end(), *baseline) == ids.end()) {
    throw ExperimentError("baseline '" + *baseline + "' is not a configuration of this experiment");
  }
}

std::vector<std::string> ExperimentConfig::configuration_ids() const {
  switch (kind) {
    case Kind::kSurvival:
      return {"mcvae"};
    case Kind::kCombinations:
      return combinations.empty() ? default_combinations() : combinations;
    default: {
      std::vector<std::string> ids;
      for (double v : grid.empty() ? default_grid(kind) : grid) ids.push_back(number_id(v));
      return ids;
    }
  }
}

std::string ExperimentConfig::baseline_id() const {
  if (baseline) return *baseline;
  const auto ids = configuration_ids();
  if (kind == Kind::kCombinations && std::find(ids.begin(), ids.end(), "C") != ids.end()) return "C";
  return ids.front();
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ExperimentError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ExperimentError("config must be a JSON object");
  reject_unknown(j, {"kind", "profile", "dataset", "train", "grid", "combinations", "baseline", "output_dir", "seeds",
                     "folds", "workers"},
                 "experiment");
  ExperimentConfig cfg;
  try {
    if (j.contains("kind")) cfg.kind = parse_kind(j.at("kind").get<std::string>());
    if (j.contains("profile")) cfg.train = training::profile(j.at("profile").get<std::string>());
    if (j.contains("train")) cfg.train = training::train_config_from_json(j.at("train").dump(), cfg.train);
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      reject_unknown(d, {"path", "synthetic"}, "dataset");
      if (d.contains("path") && d.contains("synthetic")) {
        throw ExperimentError("dataset takes either a path or a synthetic spec, not both");
      }
      if (d.contains("path")) cfg.dataset.path = d.at("path").get<std::string>();
      if (d.contains("synthetic")) cfg.dataset.synthetic = synthetic_from_json(d.at("synthetic"));
    }
    if (j.contains("grid")) cfg.grid = j.at("grid").get<std::vector<double>>();
    if (j.contains("combinations")) cfg.combinations = j.at("combinations").get<std::vector<std::string>>();
    if (j.contains("baseline")) cfg.baseline = j.at("baseline").get<std::string>();
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("folds")) cfg.folds = j.at("folds").get<std::size_t>();
    if (j.contains("workers")) cfg.workers = j.at("workers").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ExperimentError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ExperimentError(std::string("config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) { return config_from_json(read_file(path)); }

std::string config_json(const ExperimentConfig& cfg) { return config_to_json_object(cfg).dump(2); }

// -- run records ---------------------------------------------------------------------

std::string runs_table(const std::vector<RunRecord>& records) {
  std::string out = "kind\tconfig\tfold\tseed\tc_index\tepochs\twall_seconds\tmean_available\terror\n";
  for (const auto& r : records) {
    out += std::string(kind_name(r.kind)) + '\t' + r.config_id + '\t' + std::to_string(r.fold) + '\t' +
           std::to_string(r.seed) + '\t' + (r.failed() ? "nan" : full_precision(r.c_index)) + '\t' +
           std::to_string(r.epochs) + '\t' + full_precision(r.wall_seconds) + '\t' +
           full_precision(r.mean_available) + '\t' + sanitize(r.error) + '\n';
  }
  return out;
}

std::vector<RunRecord> parse_runs_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<RunRecord> records;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find('\t', start)) != std::string::npos; start = pos + 1) {
      cells.push_back(line.substr(start, pos - start));
    }
    cells.push_back(line.substr(start));
    if (cells.size() != 9) {
      throw ExperimentError("runs table line " + std::to_string(line_no) + ": expected 9 fields, got " +
                            std::to_string(cells.size()));
    }
    try {
      RunRecord r;
      r.kind = parse_kind(cells[0]);
      r.config_id = cells[1];
      r.fold = std::stoul(cells[2]);
      r.seed = std::stoull(cells[3]);
      r.c_index = cells[4] == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(cells[4]);
      r.epochs = std::stoul(cells[5]);
      r.wall_seconds = std::stod(cells[6]);
      r.mean_available = std::stod(cells[7]);
      r.error = cells[8];
      if (!r.failed() && !(r.c_index >= 0.0 && r.c_index <= 1.0)) {
        throw ExperimentError("C-index outside [0, 1]");
      }
      records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ExperimentError("runs table line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

std::vector<RunRecord> read_runs(const fs::path& dir) {
  const auto path = dir / kRunsFile;
  if (!fs::exists(path)) return {};
  return parse_runs_table(read_file(path));
}

void write_atomic(const fs::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ExperimentError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw ExperimentError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

data::Cohort load_dataset(const DatasetSource& source) {
  if (source.path) return data::load_cohort(*source.path);
  return data::generate_cohort(source.synthetic);
}

// -- runs ---------------------------------------------------------------------------

RunRecord run_one(const ExperimentConfig& cfg, const data::Cohort& cohort, const data::FoldLayout& layout,
                  const RunSpec& spec, const fs::path& log_dir) {
  RunRecord rec;
  rec.kind = cfg.kind;
  rec.config_id = spec.config_id;
  rec.fold = spec.fold;
  rec.seed = spec.seed;
  const auto start = std::chrono::steady_clock::now();
  try {
    if (spec.fold >= layout.folds.size()) throw ExperimentError("fold " + std::to_string(spec.fold) + " out of range");
    const auto& plan = layout.folds[spec.fold];
    const auto params = params_for(cfg, spec.config_id);
    Rng run_rng(spec.seed, spec.fold);

    auto train_set = data::restrict_modalities(cohort.select(plan.train), params.codes);
    auto val_set = data::restrict_modalities(cohort.select(plan.validation), params.codes);
    auto test_set = data::restrict_modalities(cohort.select(plan.test), params.codes);
    if (params.missing) {
      auto r_train = run_rng.fork("missing-train");
      auto r_val = run_rng.fork("missing-validation");
      auto r_test = run_rng.fork("missing-test");
      train_set = data::missingness_sweep_mask(train_set, *params.missing, r_train);
      val_set = data::missingness_sweep_mask(val_set, *params.missing, r_val);
      test_set = data::missingness_sweep_mask(test_set, *params.missing, r_test);
    }
    data::RobustScaler scaler;
    scaler.fit(train_set);
    scaler.transform(train_set);
    scaler.transform(val_set);
    scaler.transform(test_set);

    auto tc = cfg.train;
    tc.seed = spec.seed;
    tc.modality_dropout = params.p_drop;
    auto init_rng = run_rng.fork("init");
    McvaeModel model(training::model_config(tc, cohort.dims), init_rng);

    training::TrainHooks hooks;
    std::ofstream log;
    if (!log_dir.empty()) {
      fs::create_directories(log_dir);
      log.open(log_dir / (spec.config_id + "_" + block_name(spec.fold, spec.seed) + ".jsonl"), std::ios::trunc);
      hooks.on_epoch = [&log](const training::EpochRecord& e) { log << training::epoch_record_json(e) << '\n'; };
    }
    auto train_rng = run_rng.fork("train");
    const auto state = training::train(model, train_set, val_set, tc, train_rng, hooks);
    rec.epochs = state.epoch;

    const auto eval = training::evaluate(model, test_set);
    rec.mean_available = data::mean_available_modalities(test_set);
    if (!eval.c_index) throw ExperimentError("test split has no comparable pair");
    rec.c_index = *eval.c_index;
  } catch (const std::exception& e) {
    rec.error = e.what();
    if (rec.error.empty()) rec.error = "unknown failure";
    rec.c_index = std::numeric_limits<double>::quiet_NaN();
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

stats::FoldResults fold_results(const std::vector<RunRecord>& records, const std::vector<std::string>& ids,
                                std::size_t folds, const std::vector<std::uint64_t>& seeds) {
  stats::FoldResults fr;
  fr.configurations = ids;
  std::map<std::string, double> by_key;
  for (const auto& r : records)
    if (!r.failed()) by_key[run_key(r.config_id, r.fold, r.seed)] = r.c_index;
  for (auto seed : seeds) {
    for (std::size_t f = 0; f < folds; ++f) {
      fr.blocks.push_back(block_name(f, seed));
      std::vector<double> row;
      for (const auto& id : ids) {
        const auto it = by_key.find(run_key(id, f, seed));
        row.push_back(it == by_key.end() ? std::numeric_limits<double>::quiet_NaN() : it->second);
      }
      fr.values.push_back(std::move(row));
    }
  }
  return fr;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const Progress& progress) {
  cfg.validate();
  const auto ids = cfg.configuration_ids();
  const auto& dir = cfg.output_dir;
  fs::create_directories(dir);

  const auto config_path = dir / kConfigFile;
  const json current = config_to_json_object(cfg);
  std::vector<RunRecord> previous;
  if (fs::exists(config_path)) {
    json stored;
    try {
      stored = json::parse(read_file(config_path));
    } catch (const json::exception&) {
      throw ExperimentError(config_path.string() + " is not valid JSON");
    }
    previous = read_runs(dir);
    if (!previous.empty() && result_fingerprint(stored) != result_fingerprint(current)) {
      throw ExperimentError(dir.string() + " holds runs of a different configuration; use another output directory");
    }
  }
  write_atomic(config_path, current.dump(2) + "\n");

  const auto cohort = load_dataset(cfg.dataset);
  if (cohort.size() == 0) throw ExperimentError("dataset is empty");
  std::map<std::uint64_t, data::FoldLayout> layouts;
  for (auto seed : cfg.seeds) {
    layouts.emplace(seed, data::stratified_folds(cohort, cfg.folds, seed));
    for (const auto& w : layouts.at(seed).warnings)
      if (progress.on_warning) progress.on_warning("seed " + std::to_string(seed) + ": " + w);
  }

  std::vector<RunSpec> jobs;
  for (const auto& id : ids)
    for (auto seed : cfg.seeds)
      for (std::size_t f = 0; f < cfg.folds; ++f) jobs.push_back({id, f, seed});

  std::map<std::string, RunRecord> done;
  for (auto& r : previous)
    if (!r.failed() && r.kind == cfg.kind) done[run_key(r.config_id, r.fold, r.seed)] = std::move(r);

  ExperimentResult result;
  std::vector<std::optional<RunRecord>> slots(jobs.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto it = done.find(run_key(jobs[i].config_id, jobs[i].fold, jobs[i].seed));
    if (it != done.end()) {
      slots[i] = it->second;
      ++result.resumed;
    } else {
      pending.push_back(i);
    }
  }

  std::mutex writer;
  auto publish = [&](std::size_t slot, RunRecord rec) {
    std::lock_guard lock(writer);
    if (rec.failed() && progress.on_warning) {
      progress.on_warning("run " + rec.config_id + " " + block_name(rec.fold, rec.seed) + " failed: " + rec.error);
    }
    slots[slot] = rec;
    std::vector<RunRecord> finished;
    for (const auto& s : slots)
      if (s) finished.push_back(*s);
    write_atomic(dir / kRunsFile, runs_table(finished));
    if (progress.on_record) progress.on_record(rec);
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < pending.size();) {
      const auto& job = jobs[pending[i]];
      publish(pending[i], run_one(cfg, cohort, layouts.at(job.seed), job, dir / "logs"));
    }
  };
  const std::size_t n_threads = std::min(cfg.workers, std::max<std::size_t>(pending.size(), 1));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (pending.empty()) {
    std::vector<RunRecord> finished;
    for (const auto& s : slots) finished.push_back(*s);
    write_atomic(dir / kRunsFile, runs_table(finished));
  }

  for (auto& s : slots) result.records.push_back(std::move(*s));
  result.results = fold_results(result.records, ids, cfg.folds, cfg.seeds);
  if (is_sweep(cfg.kind)) write_atomic(dir / kCurveFile, curve_table(curve(result.records, ids)));
  const auto rep = build_report(cfg, result.records);
  write_atomic(dir / kReportFile, rep.text);
  write_atomic(dir / kSummaryFile, rep.summary_csv);
  return result;
}

namespace {

ExperimentResult run_kind(ExperimentConfig cfg, Kind kind, const Progress& progress) {
  cfg.kind = kind;
  return run_experiment(cfg, progress);
}

}  // namespace

ExperimentResult run_survival(ExperimentConfig cfg, const Progress& progress) {
  return run_kind(std::move(cfg), Kind::kSurvival, progress);
}
ExperimentResult run_combinations(ExperimentConfig cfg, const Progress& progress) {
  return run_kind(std::move(cfg), Kind::kCombinations, progress);
}
ExperimentResult run_dropout_sweep(ExperimentConfig cfg, const Progress& progress) {
  return run_kind(std::move(cfg), Kind::kDropoutSweep, progress);
}
ExperimentResult run_missingness_sweep(ExperimentConfig cfg, const Progress& progress) {
  return run_kind(std::move(cfg), Kind::kMissingnessSweep, progress);
}

// -- curves and reports ----------------------------------------------------------------

std::vector<CurvePoint> curve(const std::vector<RunRecord>& records, const std::vector<std::string>& ids) {
  std::vector<CurvePoint> points;
  for (const auto& id : ids) {
    std::vector<double> c, avail;
    for (const auto& r : records) {
      if (r.config_id != id || r.failed()) continue;
      c.push_back(r.c_index);
      avail.push_back(r.mean_available);
    }
    CurvePoint p;
    p.value = std::stod(id);
    p.runs = c.size();
    p.mean = c.empty() ? std::numeric_limits<double>::quiet_NaN() : stats::mean(c);
    p.std = stats::stddev(c);
    p.mean_available = avail.empty() ? std::numeric_limits<double>::quiet_NaN() : stats::mean(avail);
    points.push_back(p);
  }
  return points;
}

std::string curve_table(const std::vector<CurvePoint>& points) {
  std::string out = "rate\tmean\tstd\truns\tmean_available\n";
  for (const auto& p : points) {
    out += number_id(p.value) + '\t' + full_precision(p.mean) + '\t' + full_precision(p.std) + '\t' +
           std::to_string(p.runs) + '\t' + full_precision(p.mean_available) + '\n';
  }
  return out;
}

std::string format_mean_std(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f ± %.3f", mean, std);
  return buf;
}

Report build_report(const ExperimentConfig& cfg, const std::vector<RunRecord>& records) {
  const auto ids = cfg.configuration_ids();
  std::ostringstream text;
  std::ostringstream csv;
  csv << "configuration,runs,failed,mean,std,mean_available\n";
  csv.precision(17);

  std::size_t failed = 0;
  for (const auto& r : records) failed += r.failed();
  text << "experiment: " << kind_name(cfg.kind) << '\n';
  text << "runs: " << records.size() - failed << " completed, " << failed << " failed\n";
  for (const auto& r : records)
    if (r.failed()) text << "  warning: " << r.config_id << ' ' << block_name(r.fold, r.seed) << " excluded: " << r.error << '\n';
  text << "\nconfiguration\truns\ttest C-index\n";
  for (const auto& id : ids) {
    std::vector<double> c, avail;
    std::size_t fails = 0;
    for (const auto& r : records) {
      if (r.config_id != id) continue;
      if (r.failed()) {
        ++fails;
        continue;
      }
      c.push_back(r.c_index);
      avail.push_back(r.mean_available);
    }
    const double m = c.empty() ? std::numeric_limits<double>::quiet_NaN() : stats::mean(c);
    const double s = stats::stddev(c);
    const double a = avail.empty() ? std::numeric_limits<double>::quiet_NaN() : stats::mean(avail);
    text << id << '\t' << c.size() << '\t' << (c.empty() ? std::string("n/a") : format_mean_std(m, s)) << '\n';
    csv << id << ',' << c.size() << ',' << fails << ',' << m << ',' << s << ',' << a << '\n';
  }

  text << "\nstatistics:\n";
  if (ids.size() < 2) {
    text << "  nothing to compare (single configuration)\n";
    return {text.str(), csv.str()};
  }
  const auto full = fold_results(records, ids, cfg.folds, cfg.seeds);
  const auto complete = full.complete_blocks();
  if (complete.rows() < full.rows()) {
    text << "  incomplete blocks skipped:";
    std::set<std::string> kept(complete.blocks.begin(), complete.blocks.end());
    for (const auto& b : full.blocks)
      if (!kept.count(b)) text << ' ' << b;
    text << " (failed or missing runs)\n";
  }
  if (complete.rows() < 2) {
    text << "  tests skipped: fewer than 2 complete blocks\n";
    return {text.str(), csv.str()};
  }

  const auto fr = stats::friedman_test(complete);
  text << "  Friedman chi2 = " << fr.statistic << ", p = " << fr.p_value << " (" << complete.rows() << " blocks, "
       << ids.size() << " configurations)\n";
  text << "  mean ranks (1 = best):";
  for (std::size_t j = 0; j < ids.size(); ++j) text << ' ' << ids[j] << '=' << fr.mean_ranks[j];
  text << '\n';
  const auto nem = stats::nemenyi_posthoc(complete);
  text << "  Nemenyi critical difference (alpha 0.05) = " << nem.critical_difference << '\n';
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (std::size_t j = i + 1; j < ids.size(); ++j)
      text << "    " << ids[i] << " vs " << ids[j] << ": p = " << nem.p_values[i][j] << '\n';

  const auto base = cfg.baseline_id();
  const auto b = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), base) - ids.begin());
  std::vector<std::string> others;
  std::vector<std::vector<double>> diffs;
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (j == b) continue;
    others.push_back(ids[j]);
    std::vector<double> d;
    for (const auto& row : complete.values) d.push_back(row[b] - row[j]);
    diffs.push_back(std::move(d));
  }
  text << "  one-sided Wilcoxon signed-rank vs baseline " << base << " (H1: baseline better), Holm-adjusted:\n";
  const auto tests = stats::wilcoxon_holm(diffs, stats::Alternative::kGreater);
  for (std::size_t i = 0; i < others.size(); ++i) {
    const auto& t = tests[i];
    text << "    " << others[i] << ": ";
    if (!t.testable) {
      text << "untestable (" << t.reason << ")\n";
      continue;
    }
    text << "W+ = " << t.wilcoxon.w_plus << ", n = " << t.wilcoxon.n << ", p = " << t.wilcoxon.p_value
         << ", Holm p = " << t.adjusted_p << (t.wilcoxon.exact ? "" : " (normal approximation)") << '\n';
  }
  return {text.str(), csv.str()};
}

Report report(const fs::path& dir) {
  const auto config_path = dir / kConfigFile;
  if (!fs::exists(config_path)) throw ExperimentError("no " + std::string(kConfigFile) + " in " + dir.string());
  const auto cfg = load_config(config_path);
  const auto records = read_runs(dir);
  if (records.empty()) throw ExperimentError("no completed runs in " + dir.string());
  auto rep = build_report(cfg, records);
  write_atomic(dir / kReportFile, rep.text);
  write_atomic(dir / kSummaryFile, rep.summary_csv);
  return rep;
}

}  // namespace mcvae::experiments
