#include "mcvae/nn.hpp"

#include <cmath>

namespace mcvae::nn {

DenseLayer::DenseLayer(std::size_t in, std::size_t out, Rng& rng, Activation act, bool bias)
    : in_(in), out_(out), act_(act) {
  if (in == 0 || out == 0) throw std::invalid_argument("DenseLayer: dimensions must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(in * out);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  weight_ = Tensor::parameter({out, in}, std::move(w));
  if (bias) bias_ = Tensor::parameter({out}, std::vector<double>(out, 0.0));
}

Tensor DenseLayer::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != in_) {
    throw ad::ShapeError("dense: input has " + std::to_string(x.rank() == 2 ? x.cols() : x.size()) +
                         " features, layer expects " + std::to_string(in_));
  }
  Tensor y = ad::matmul(x, weight_, /*transpose_b=*/true);
  if (bias_) y = y + *bias_;
  switch (act_) {
    case Activation::kRelu: return ad::relu(y);
    case Activation::kGelu: return ad::gelu(y);
    case Activation::kNone: break;
  }
  return y;
}

void DenseLayer::collect(StateList& out, const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight_, true});
  if (bias_) out.push_back({prefix + ".bias", *bias_, true});
}

BatchNorm::BatchNorm(std::size_t features)
    : features_(features),
      scale_(Tensor::parameter({features}, std::vector<double>(features, 1.0))),
      shift_(Tensor::parameter({features}, std::vector<double>(features, 0.0))),
      running_mean_(Tensor::constant({features}, 0.0)),
      running_var_(Tensor::constant({features}, 1.0)) {}

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
  if (x.rank() != 2 || x.cols() != features_) {
    throw ad::ShapeError("batchnorm: expected " + std::to_string(features_) + " features, got shape " +
                         ad::to_string(x.shape()));
  }
  if (mode == Mode::kEval) {
    const auto rm = running_mean_.values();
    const auto rv = running_var_.values();
    std::vector<double> inv(features_);
    for (std::size_t j = 0; j < features_; ++j) inv[j] = 1.0 / std::sqrt(rv[j] + kVarianceEpsilon);
    const Tensor centered = x - Tensor::constant({features_}, std::vector<double>(rm.begin(), rm.end()));
    return centered * Tensor::constant({features_}, std::move(inv)) * scale_ + shift_;
  }

  const std::size_t n = x.rows();
  if (n < 2) throw std::invalid_argument("batchnorm: train mode needs a batch of at least 2, got 1");
  const Tensor mu = ad::mean(x, 0);
  const Tensor centered = x - mu;
  const Tensor var = ad::mean(ad::square(centered), 0);
  const Tensor normalized = centered / ad::sqrt(var + kVarianceEpsilon);

  auto rm = running_mean_.mutable_values();
  auto rv = running_var_.mutable_values();
  const double unbias = static_cast<double>(n) / static_cast<double>(n - 1);
  for (std::size_t j = 0; j < features_; ++j) {
    rm[j] = (1.0 - kMomentum) * rm[j] + kMomentum * mu.values()[j];
    rv[j] = (1.0 - kMomentum) * rv[j] + kMomentum * var.values()[j] * unbias;
  }
  return normalized * scale_ + shift_;
}

void BatchNorm::collect(StateList& out, const std::string& prefix) const {
  out.push_back({prefix + ".scale", scale_, true});
  out.push_back({prefix + ".shift", shift_, true});
  out.push_back({prefix + ".running_mean", running_mean_, false});
  out.push_back({prefix + ".running_var", running_var_, false});
}

LayerNorm::LayerNorm(std::size_t features)
    : features_(features),
      scale_(Tensor::parameter({features}, std::vector<double>(features, 1.0))),
      shift_(Tensor::parameter({features}, std::vector<double>(features, 0.0))) {}

Tensor LayerNorm::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.cols() != features_) {
    throw ad::ShapeError("layernorm: expected " + std::to_string(features_) + " features, got shape " +
                         ad::to_string(x.shape()));
  }
  const Tensor centered = x - ad::mean(x, 1);
  const Tensor var = ad::mean(ad::square(centered), 1);
  return centered / ad::sqrt(var + kVarianceEpsilon) * scale_ + shift_;
}

void LayerNorm::collect(StateList& out, const std::string& prefix) const {
  out.push_back({prefix + ".scale", scale_, true});
  out.push_back({prefix + ".shift", shift_, true});
}

Tensor feature_dropout(const Tensor& x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: rate must lie in [0, 1), got " + std::to_string(p));
  if (mode == Mode::kEval || p == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
  return x * Tensor::constant(x.shape(), std::move(mask));
}

void AdamW::update(std::size_t slot, std::span<double> param, std::span<const double> grad) {
  if (param.size() != grad.size()) throw std::invalid_argument("adamw: gradient size does not match parameter");
  if (moments_.size() <= slot) moments_.resize(slot + 1);
  Moments& m = moments_[slot];
  if (m.first.empty()) {
    m.first.assign(param.size(), 0.0);
    m.second.assign(param.size(), 0.0);
  }
  ++m.count;
  const auto& o = options_;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(m.count));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(m.count));
  const double decay = 1.0 - o.learning_rate * o.weight_decay;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m.first[i] = o.beta1 * m.first[i] + (1.0 - o.beta1) * g;
    m.second[i] = o.beta2 * m.second[i] + (1.0 - o.beta2) * g * g;
    const double m_hat = m.first[i] / c1;
    const double v_hat = m.second[i] / c2;
    param[i] = param[i] * decay - o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
  }
}

void AdamW::step(const StateList& params) {
  for (const auto& p : params) {
    if (!p.trainable || !p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NonFiniteGradient(p.name);
    }
  }
  std::size_t slot = 0;
  for (const auto& p : params) {
    if (!p.trainable) continue;
    if (p.tensor.has_grad()) {
      Tensor t = p.tensor;
      update(slot, t.mutable_values(), p.tensor.grad());
    }
    ++slot;
  }
  ++steps_;
}

void zero_grad(const StateList& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

}  // namespace mcvae::nn
