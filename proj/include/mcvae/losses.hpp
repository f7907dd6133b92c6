#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcvae/autodiff.hpp"
#include "mcvae/model.hpp"

namespace mcvae::losses {

using ad::Tensor;

inline constexpr double kDefaultTemperature = 0.1;

/// Negative Cox partial log-likelihood, summed over events, Breslow ties
/// (every patient with t_j >= t_i is in the risk set of event i).
/// Returns nullopt for a batch without events.
std::optional<Tensor> cox_loss(const Tensor& log_hazards, std::span<const double> times,
                               std::span<const std::uint8_t> events);

/// Reconstruction target and output for the available rows of one modality.
struct ModalityReconstruction {
  Tensor target;
  Tensor reconstruction;
};

/// Sum over modalities and rows of squared L2 error, divided by batch size.
/// Unavailable rows are simply absent from the terms.
Tensor reconstruction_loss(std::span<const ModalityReconstruction> terms, std::size_t batch_size);

/// Dense-mask form: rows with mask 0 are excluded (zero value, zero gradient).
Tensor reconstruction_loss(const std::vector<Tensor>& targets, const std::vector<Tensor>& reconstructions,
                           const std::vector<std::vector<std::uint8_t>>& available);

/// sum_k softmax(kl_logits)_k * sum_{available rows} KL(N(mu, diag exp(log_var)) || N(0, I)) / batch.
Tensor kl_loss(const std::vector<ModalityLatent>& latents, const Tensor& kl_logits, std::size_t batch_size);

/// InfoNCE over every available (patient, modality) latent in the batch:
/// positives are other modalities of the same patient, the denominator runs
/// over every other entry. Averaged over positive pairs; zero when no
/// patient has two available modalities.
Tensor contrastive_loss(const std::vector<ModalityLatent>& latents, double temperature = kDefaultTemperature);

/// Linear KL warm-up: beta_max * min(1, epoch / warmup).
double beta_schedule(double epoch, double warmup_epochs, double beta_max);

enum Term : std::size_t { kTask = 0, kReconstruction = 1, kKl = 2, kContrastive = 3 };
inline constexpr std::array<const char*, 4> kTermNames = {"task", "reconstruction", "kl", "contrastive"};

struct LossComponents {
  std::optional<Tensor> task;  // absent for no-event batches
  Tensor reconstruction;
  Tensor kl;  // already multiplied by beta
  Tensor contrastive;
};

struct LossBreakdown {
  double task = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
  double contrastive = 0.0;
  double total = 0.0;
  double beta = 0.0;
  std::array<double, 4> weights{};  // 1 / (2 sigma_i^2)
  bool task_skipped = false;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  explicit NonFiniteLoss(std::string component)
      : std::runtime_error("non-finite loss component '" + component + "'"), component_(std::move(component)) {}
  const std::string& component() const { return component_; }

 private:
  std::string component_;
};

struct CombinedLoss {
  Tensor total;
  LossBreakdown breakdown;
};

/// Uncertainty-weighted sum: sum_i exp(-s_i)/2 * L_i + s_i/2 with s_i = log sigma_i^2.
/// A skipped task term contributes neither its loss nor its s_i/2.
CombinedLoss total_loss(const LossComponents& components, const Tensor& log_vars, double beta);

}  // namespace mcvae::losses
