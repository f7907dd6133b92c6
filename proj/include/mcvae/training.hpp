#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mcvae/data.hpp"
#include "mcvae/losses.hpp"
#include "mcvae/model.hpp"

namespace mcvae::training {

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t max_epochs = 150;
  std::size_t patience = 20;
  double learning_rate = 5.28e-5;
  double weight_decay = 1.24e-4;
  double dropout = 0.521;
  double modality_dropout = 0.3;
  double beta_max = 1.0;
  double warmup_epochs = 30.0;
  double temperature = losses::kDefaultTemperature;
  std::size_t latent_dim = 128;
  std::size_t hidden_dim = 256;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Tuned defaults for the two cohorts ("luad", "lusc").
TrainConfig profile(std::string_view name);

ModelConfig model_config(const TrainConfig& cfg, const std::array<std::size_t, data::kModalities>& dims);

struct EpochRecord {
  std::size_t epoch = 0;
  losses::LossBreakdown loss;  // means over the epoch's batches
  double validation_c_index = 0.0;
  std::size_t batches = 0;
  std::size_t cox_skipped = 0;
  bool improved = false;
};

struct TrainState {
  std::size_t epoch = 0;  // epochs completed
  double best_validation = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t since_improvement = 0;
  bool stopped_early = false;
  std::vector<EpochRecord> history;
};

enum class StopDecision { kContinue, kStop };

struct StopCheck {
  bool improved = false;
  StopDecision decision = StopDecision::kContinue;
};

inline constexpr double kImprovementTolerance = 1e-6;

/// Improvement means val > best + 1e-6; it resets the counter and moves the
/// best epoch. Otherwise the counter grows; stop when it reaches patience.
StopCheck early_stop_check(TrainState& state, std::size_t epoch, double validation_c_index, std::size_t patience);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Replaces the validation C-index computation (used to inject curves).
  std::function<double(const McvaeModel&, std::size_t epoch)> validator;
};

/// Batches of indices with events spread as evenly as possible.
std::vector<std::vector<std::size_t>> make_batches(const data::Cohort& cohort, std::size_t batch_size, Rng& rng);

/// Feature tensors and availability for the given records under `masks`.
ModelInput make_input(const data::Cohort& cohort, const std::vector<std::size_t>& rows,
                      const std::vector<data::Mask>& masks);

/// Losses of one training batch; `rng` drives dropout and sampling.
losses::CombinedLoss batch_loss(McvaeModel& model, const data::Cohort& cohort, const std::vector<std::size_t>& rows,
                                const std::vector<data::Mask>& masks, double beta, double temperature, Mode mode,
                                Rng& rng);

/// Trains with early stopping on validation C-index and restores the best
/// epoch's parameters into `model`.
TrainState train(McvaeModel& model, const data::Cohort& train_set, const data::Cohort& validation_set,
                 const TrainConfig& cfg, Rng& rng, const TrainHooks& hooks = {});

struct Evaluation {
  std::vector<double> risks;
  std::optional<double> c_index;
  bool all_ties = false;
};

/// Eval-mode pass (latent means, natural masks, no dropout).
Evaluation evaluate(McvaeModel& model, const data::Cohort& cohort);
std::vector<double> predict_risks(McvaeModel& model, const data::Cohort& cohort);

std::string epoch_record_json(const EpochRecord& record);
std::string train_config_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text, TrainConfig base = {});

}  // namespace mcvae::training
