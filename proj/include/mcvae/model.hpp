#pragma once

// Multimodal contrastive VAE: per-modality variational encoders, gated
// availability-normalized fusion with a residual fusion block, per-modality
// decoders (clinical excluded) and a linear log-hazard head.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mcvae/autodiff.hpp"
#include "mcvae/nn.hpp"
#include "mcvae/rng.hpp"

namespace mcvae {

using ad::Tensor;
using nn::Mode;

inline constexpr std::size_t kClinical = 0;

struct ModalitySpec {
  std::string name;
  char code = '?';  // C, T, W, M
  std::size_t input_dim = 0;
  std::size_t depth = 2;  // encoder layer count L_k, >= 2
  bool reconstructable = true;
};

/// The four-modality layout: clinical (depth 2, not reconstructed),
/// transcriptomics (3), WSI (2), methylation (3).
std::vector<ModalitySpec> standard_modalities(std::size_t clinical_dim, std::size_t transcriptomics_dim,
                                              std::size_t wsi_dim, std::size_t methylation_dim);

struct ModelConfig {
  std::vector<ModalitySpec> modalities;
  std::size_t latent_dim = 128;
  std::size_t hidden_dim = 256;
  double dropout = 0.521;

  /// Throws std::invalid_argument on an inconsistent layout.
  void validate() const;
};

/// Log-variance head outputs are clamped into this range.
inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

/// Posterior of one modality over a batch. mu/log_var/z cover only the
/// available rows (listed in `rows`); z_full is batch x latent with zero rows
/// for unavailable patients.
struct ModalityLatent {
  std::vector<std::size_t> rows;
  Tensor mu;
  Tensor log_var;
  Tensor z;
  Tensor z_full;

  bool any_available() const { return !rows.empty(); }
};

/// Latent for a modality no patient in the batch carries.
ModalityLatent missing_latent(std::size_t batch_size, std::size_t latent_dim);

/// z = mu + exp(0.5 log_var) * noise.
Tensor reparameterize(const Tensor& mu, const Tensor& log_var, const Tensor& noise);

/// Batch input: per-modality feature matrices (batch x d_k, zero rows where
/// unavailable) plus availability[k][row].
struct ModelInput {
  std::vector<Tensor> features;
  std::vector<std::vector<std::uint8_t>> available;

  std::size_t batch_size() const { return features.empty() ? 0 : features.front().rows(); }
};

struct ForwardResult {
  std::vector<ModalityLatent> latents;
  Tensor fused;       // batch x latent
  Tensor log_hazard;  // batch x 1
  /// Reconstruction of modality k for latents[k].rows, when requested.
  std::vector<std::optional<Tensor>> reconstructions;
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(const ModalitySpec& spec, std::size_t hidden, std::size_t latent, double dropout, Rng& rng);

  struct Output {
    Tensor mu;
    Tensor log_var;
  };
  /// `batch_stats` selects batch-statistics normalization in train mode; a
  /// one-row train batch must pass false.
  Output forward(const Tensor& x, Mode mode, Rng& rng, bool batch_stats = true);
  void collect(nn::StateList& out, const std::string& prefix) const;

  nn::DenseLayer& first_layer() { return hidden_.front(); }

 private:
  std::vector<nn::DenseLayer> hidden_;
  std::vector<nn::BatchNorm> norms_;
  nn::DenseLayer mu_head_;
  nn::DenseLayer log_var_head_;
  double dropout_ = 0.0;
};

class Decoder {
 public:
  Decoder() = default;
  Decoder(std::size_t latent, std::size_t hidden, std::size_t output, double dropout, Rng& rng);

  Tensor forward(const Tensor& z, Mode mode, Rng& rng, bool batch_stats = true);
  void collect(nn::StateList& out, const std::string& prefix) const;

  nn::DenseLayer& output_layer() { return output_; }

 private:
  nn::DenseLayer hidden_;
  nn::BatchNorm norm_;
  nn::DenseLayer output_;
  double dropout_ = 0.0;
};

class McvaeModel {
 public:
  static constexpr std::size_t kLossTerms = 4;  // task, recon, kl, contrastive

  McvaeModel() = default;
  McvaeModel(ModelConfig config, Rng& rng);

  const ModelConfig& config() const { return config_; }
  std::size_t modality_count() const { return config_.modalities.size(); }

  /// Encodes the rows of `x` (all available for modality k).
  ModalityLatent encode(std::size_t k, const Tensor& x, std::vector<std::size_t> rows, std::size_t batch_size,
                        Mode mode, Rng& rng);

  /// Gated, availability-normalized mean of the latents before the fusion
  /// block. Throws if some row has no available modality.
  Tensor aggregate(const std::vector<ModalityLatent>& latents, std::size_t batch_size) const;
  /// Full fusion: aggregate followed by v + dropout(gelu(layernorm(v))).
  Tensor fuse(const std::vector<ModalityLatent>& latents, std::size_t batch_size, Mode mode, Rng& rng);
  Tensor fusion_block(const Tensor& v, Mode mode, Rng& rng);

  /// Reconstructs modality k from fused rows. Rejects the clinical modality.
  Tensor decode(std::size_t k, const Tensor& fused_rows, Mode mode, Rng& rng);

  Tensor predict_log_hazard(const Tensor& fused) const;

  /// Complete pass. Train mode samples latents; eval mode uses the means.
  ForwardResult forward(const ModelInput& input, Mode mode, Rng& rng, bool reconstruct);

  /// All parameters and buffers under stable hierarchical names.
  nn::StateList state() const;

  Tensor& gates() { return gates_; }
  Tensor& kl_logits() { return kl_logits_; }
  Tensor& loss_log_vars() { return loss_log_vars_; }
  const Tensor& loss_log_vars() const { return loss_log_vars_; }
  const Tensor& kl_logits() const { return kl_logits_; }
  Encoder& encoder(std::size_t k) { return encoders_.at(k); }
  Decoder& decoder(std::size_t k);
  nn::DenseLayer& survival_head() { return survival_head_; }

  /// Deep copy of all parameter values and buffers.
  McvaeModel clone() const;
  /// Copies values from a model with the same layout.
  void assign_from(const McvaeModel& other);

 private:
  ModelConfig config_;
  std::vector<Encoder> encoders_;
  std::vector<std::optional<Decoder>> decoders_;
  nn::LayerNorm fusion_norm_;
  nn::DenseLayer survival_head_;
  Tensor gates_;
  Tensor kl_logits_;
  Tensor loss_log_vars_;
};

// -- checkpoints -------------------------------------------------------------

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary archive: magic, JSON header (model config, caller metadata, tensor
/// index) and raw little-endian float64 payload. Round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const McvaeModel& model, const std::string& metadata_json);

struct LoadedCheckpoint {
  McvaeModel model;
  std::string metadata_json;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& json);

}  // namespace mcvae
