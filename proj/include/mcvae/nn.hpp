#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcvae/autodiff.hpp"
#include "mcvae/rng.hpp"

namespace mcvae::nn {

using ad::Tensor;

enum class Mode { kTrain, kEval };

/// A tensor owned by a layer, addressed by a stable hierarchical name.
/// Buffers (e.g. running statistics) are persisted but never optimized.
struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool trainable = true;
};

using StateList = std::vector<NamedTensor>;

enum class Activation { kNone, kRelu, kGelu };

class DenseLayer {
 public:
  DenseLayer() = default;
  /// Weights ~ U(-1/sqrt(in), 1/sqrt(in)), bias zero.
  DenseLayer(std::size_t in, std::size_t out, Rng& rng, Activation act = Activation::kNone, bool bias = true);

  Tensor forward(const Tensor& x) const;

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  const Tensor& weight() const { return weight_; }
  Tensor& weight() { return weight_; }
  const std::optional<Tensor>& bias() const { return bias_; }

  void collect(StateList& out, const std::string& prefix) const;

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  Tensor weight_;  // out x in
  std::optional<Tensor> bias_;
  Activation act_ = Activation::kNone;
};

class BatchNorm {
 public:
  static constexpr double kMomentum = 0.1;
  static constexpr double kVarianceEpsilon = 1e-5;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t features);

  /// Train mode normalizes by batch statistics and updates the running
  /// estimates; eval mode uses the running estimates only.
  Tensor forward(const Tensor& x, Mode mode);

  std::span<const double> running_mean() const { return running_mean_.values(); }
  std::span<const double> running_var() const { return running_var_.values(); }
  Tensor& scale() { return scale_; }
  Tensor& shift() { return shift_; }

  void collect(StateList& out, const std::string& prefix) const;

 private:
  std::size_t features_ = 0;
  Tensor scale_;
  Tensor shift_;
  Tensor running_mean_;
  Tensor running_var_;
};

class LayerNorm {
 public:
  static constexpr double kVarianceEpsilon = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t features);

  Tensor forward(const Tensor& x) const;
  void collect(StateList& out, const std::string& prefix) const;

 private:
  std::size_t features_ = 0;
  Tensor scale_;
  Tensor shift_;
};

/// Inverted dropout: in train mode each scalar is zeroed with probability p
/// and survivors are scaled by 1/(1-p). Identity in eval mode.
Tensor feature_dropout(const Tensor& x, double p, Mode mode, Rng& rng);

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& param)
      : std::runtime_error("non-finite gradient in parameter '" + param + "'"), param_(param) {}
  const std::string& parameter() const { return param_; }

 private:
  std::string param_;
};

struct AdamWOptions {
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// AdamW with decoupled weight decay.
///
/// Parameters that received no gradient during the last backward pass are
/// skipped entirely (no decay, no moment update), matching frameworks where
/// an untouched parameter has no gradient at all.
class AdamW {
 public:
  explicit AdamW(AdamWOptions options = {}) : options_(options) {}

  /// Updates every trainable entry of `params` that has a gradient.
  /// Throws NonFiniteGradient before touching any parameter.
  void step(const StateList& params);

  /// Single-tensor update for slot `slot` (slots are created on demand).
  void update(std::size_t slot, std::span<double> param, std::span<const double> grad);

  std::size_t steps() const { return steps_; }
  const AdamWOptions& options() const { return options_; }

 private:
  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
    std::size_t count = 0;
  };
  AdamWOptions options_;
  std::vector<Moments> moments_;
  std::size_t steps_ = 0;
};

/// Clears gradients of every entry in the list.
void zero_grad(const StateList& params);

}  // namespace mcvae::nn
