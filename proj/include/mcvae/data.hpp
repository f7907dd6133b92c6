#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcvae/rng.hpp"
#include "mcvae/survival.hpp"

namespace mcvae::data {

inline constexpr std::size_t kModalities = 4;
inline constexpr std::array<const char*, kModalities> kModalityNames = {"clinical", "transcriptomics", "wsi",
                                                                         "methylation"};
inline constexpr std::array<char, kModalities> kModalityCodes = {'C', 'T', 'W', 'M'};

using Mask = std::array<std::uint8_t, kModalities>;

struct PatientRecord {
  std::string id;
  std::array<std::vector<double>, kModalities> features;  // zero placeholder when unavailable
  Mask available{1, 1, 1, 1};
  double time = 1.0;
  std::uint8_t event = 0;
  std::optional<double> oracle_log_hazard;

  survival::Outcome outcome() const { return {time, event}; }
};

struct Cohort {
  std::array<std::size_t, kModalities> dims{};
  std::vector<PatientRecord> records;

  std::size_t size() const { return records.size(); }
  /// Subset in the given order.
  Cohort select(const std::vector<std::size_t>& indices) const;
  std::vector<survival::Outcome> outcomes() const;
  double censoring_rate() const;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// -- synthetic generator ---------------------------------------------------------

struct SyntheticSpec {
  std::size_t patients = 600;
  std::size_t factor_dim = 8;  // d_u
  std::array<std::size_t, kModalities> dims{16, 64, 64, 64};
  std::array<double, kModalities> noise{1.0, 1.0, 1.0, 1.0};
  /// Loading matrices A_k (d_k x d_u, row-major). Empty: N(0, 1/d_u) entries.
  std::array<std::vector<double>, kModalities> loadings;
  /// Empty: a random direction scaled to risk_scale.
  std::vector<double> risk_weights;
  double risk_scale = 1.5;
  double baseline_hazard = 1.0;
  double censoring_rate = 0.3;
  std::array<double, kModalities> missing_rates{0.0, 0.08, 0.03, 0.15};
  std::uint64_t seed = 0;

  void validate() const;
};

/// u ~ N(0, I); x_k = A_k u + noise; T ~ Exp(h0 exp(w.u)); independent
/// exponential censoring whose rate is solved so the expected censored
/// fraction equals the target.
Cohort generate_cohort(const SyntheticSpec& spec);
Cohort generate_cohort(const SyntheticSpec& spec, Rng& rng);

// -- cohort files ----------------------------------------------------------------

inline constexpr const char* kCohortSchema = "mcvae-cohort v1";

/// Header comment, header row, then: patient_id, time, event, four presence
/// flags, feature blocks (clinical, transcriptomics, wsi, methylation; empty
/// cells when absent), optional oracle_log_hazard.
void save_cohort(const std::filesystem::path& path, const Cohort& cohort);

/// `expected_dims`, when given, must match the file's block widths.
Cohort load_cohort(const std::filesystem::path& path,
                   const std::optional<std::array<std::size_t, kModalities>>& expected_dims = std::nullopt);

// -- folds -----------------------------------------------------------------------------

struct FoldPlan {
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

struct FoldLayout {
  std::vector<FoldPlan> folds;
  std::vector<int> strata;  // per patient after merging
  std::vector<std::string> warnings;
};

/// Stratum: 0 = event by the median observed time, 1 = later event,
/// 2 = censored. Each fold is one test split (~20%); the remainder is split
/// stratified into validation (16% of the cohort) and training (64%).
FoldLayout stratified_folds(const Cohort& cohort, std::size_t k, std::uint64_t seed);

// -- masks ------------------------------------------------------------------------------

/// Clinical always kept; each other available modality kept with probability 1 - p_drop.
Mask modality_dropout_mask(const Mask& available, double p_drop, Rng& rng);

/// Applies `mask` (intersected with availability, clinical kept) and zeroes
/// the features of every dropped modality.
void apply_mask(PatientRecord& record, const Mask& mask);

/// Copies of the records with each available non-clinical modality removed
/// with probability `level`.
Cohort missingness_sweep_mask(const Cohort& cohort, double level, Rng& rng);

/// Marks every modality whose code is absent from `codes` (e.g. "CTW") as unavailable.
Cohort restrict_modalities(const Cohort& cohort, const std::string& codes);

double mean_available_modalities(const Cohort& cohort);

// -- scaling ---------------------------------------------------------------------------

/// Per-feature (x - median) / IQR fitted on available rows of a training set.
class RobustScaler {
 public:
  void fit(const Cohort& train);
  void transform(Cohort& cohort) const;

 private:
  std::array<std::vector<double>, kModalities> median_;
  std::array<std::vector<double>, kModalities> scale_;
};

}  // namespace mcvae::data
