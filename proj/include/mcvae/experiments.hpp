#pragma once

// Cross-validated experiment protocols, run records and reporting.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mcvae/data.hpp"
#include "mcvae/stats.hpp"
#include "mcvae/training.hpp"

namespace mcvae::experiments {

enum class Kind { kSurvival, kCombinations, kDropoutSweep, kMissingnessSweep };

std::string_view kind_name(Kind kind);
Kind parse_kind(std::string_view name);

class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetSource {
  std::optional<std::filesystem::path> path;  // set: load this cohort file
  data::SyntheticSpec synthetic;              // otherwise: generate
};

/// The eight clinical-anchored modality subsets.
const std::vector<std::string>& default_combinations();
/// {0, 0.1, 0.3, 0.5, 0.7, 0.9} for dropout, {0.1, ..., 0.9} for missingness.
std::vector<double> default_grid(Kind kind);

inline constexpr double kMissingnessTrainDropout = 0.3;

struct ExperimentConfig {
  Kind kind = Kind::kSurvival;
  DatasetSource dataset;
  training::TrainConfig train;
  std::vector<double> grid;                // sweep kinds; empty means default_grid
  std::vector<std::string> combinations;   // combinations kind; empty means all eight
  std::optional<std::string> baseline;     // configuration id compared against
  std::filesystem::path output_dir = "results";
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t folds = 5;
  std::size_t workers = 1;

  void validate() const;
  /// Configuration ids in run order ("mcvae", "C+T", "0.3", ...).
  std::vector<std::string> configuration_ids() const;
  std::string baseline_id() const;
};

/// Structured text form; unknown keys are rejected. `profile` ("luad" or
/// "lusc") selects the training defaults that `train` then overrides.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_json(const ExperimentConfig& cfg);

struct RunRecord {
  Kind kind = Kind::kSurvival;
  std::string config_id;
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  double c_index = 0.0;  // NaN for a failed run
  std::size_t epochs = 0;
  double wall_seconds = 0.0;
  double mean_available = 0.0;  // average modalities per test patient
  std::string error;            // empty on success

  bool failed() const { return !error.empty(); }
};

inline constexpr const char* kRunsFile = "runs.tsv";
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kCurveFile = "curve.tsv";
inline constexpr const char* kReportFile = "report.txt";
inline constexpr const char* kSummaryFile = "summary.csv";

std::string runs_table(const std::vector<RunRecord>& records);
std::vector<RunRecord> parse_runs_table(const std::string& text);
std::vector<RunRecord> read_runs(const std::filesystem::path& dir);

/// Writes `content` to a sibling temporary file and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);

data::Cohort load_dataset(const DatasetSource& source);

struct RunSpec {
  std::string config_id;
  std::size_t fold = 0;
  std::uint64_t seed = 0;
};

/// Runs one (configuration, fold, seed) triple. Training and validation see
/// only their own splits; the test split enters only the final evaluation.
/// Failures are captured in the record.
RunRecord run_one(const ExperimentConfig& cfg, const data::Cohort& cohort, const data::FoldLayout& layout,
                  const RunSpec& spec, const std::filesystem::path& log_dir = {});

struct Progress {
  std::function<void(const RunRecord&)> on_record;
  std::function<void(const std::string&)> on_warning;
};

struct ExperimentResult {
  std::vector<RunRecord> records;  // every configured run, in run order
  stats::FoldResults results;
  std::size_t resumed = 0;  // runs reused from an earlier invocation
};

/// Runs every (configuration, fold, seed) of `cfg` on `workers` threads,
/// skipping runs already completed in the output directory.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const Progress& progress = {});

ExperimentResult run_survival(ExperimentConfig cfg, const Progress& progress = {});
ExperimentResult run_combinations(ExperimentConfig cfg, const Progress& progress = {});
ExperimentResult run_dropout_sweep(ExperimentConfig cfg, const Progress& progress = {});
ExperimentResult run_missingness_sweep(ExperimentConfig cfg, const Progress& progress = {});

/// Blocks are "f<fold>s<seed>", columns follow `ids`; failed or absent
/// runs are NaN.
stats::FoldResults fold_results(const std::vector<RunRecord>& records, const std::vector<std::string>& ids,
                                std::size_t folds, const std::vector<std::uint64_t>& seeds);

struct CurvePoint {
  double value = 0.0;
  double mean = 0.0;
  double std = 0.0;
  std::size_t runs = 0;
  double mean_available = 0.0;
};

std::vector<CurvePoint> curve(const std::vector<RunRecord>& records, const std::vector<std::string>& ids);
std::string curve_table(const std::vector<CurvePoint>& points);

/// "0.651 ± 0.026"
std::string format_mean_std(double mean, double std);

struct Report {
  std::string text;
  std::string summary_csv;
};

/// Aggregates the directory's records; writes report.txt and summary.csv.
Report report(const std::filesystem::path& dir);
Report build_report(const ExperimentConfig& cfg, const std::vector<RunRecord>& records);

}  // namespace mcvae::experiments
