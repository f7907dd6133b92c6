#pragma once

#include <cstdint>
#include <vector>

#include "mcvae/model.hpp"
#include "mcvae/rng.hpp"

namespace fixture {

inline mcvae::ModelConfig tiny_config(double dropout = 0.2) {
  mcvae::ModelConfig c;
  c.modalities = mcvae::standard_modalities(3, 5, 4, 6);
  c.latent_dim = 4;
  c.hidden_dim = 6;
  c.dropout = dropout;
  return c;
}

/// Random batch; clinical always present, other modalities present with
/// probability `keep`. Masked rows hold zeros.
inline mcvae::ModelInput random_input(const mcvae::ModelConfig& c, std::size_t batch, mcvae::Rng& rng,
                                      double keep = 0.7) {
  mcvae::ModelInput in;
  for (std::size_t k = 0; k < c.modalities.size(); ++k) {
    const std::size_t d = c.modalities[k].input_dim;
    std::vector<std::uint8_t> avail(batch);
    std::vector<double> v(batch * d, 0.0);
    for (std::size_t r = 0; r < batch; ++r) {
      avail[r] = k == mcvae::kClinical || rng.bernoulli(keep);
      if (!avail[r]) continue;
      for (std::size_t j = 0; j < d; ++j) v[r * d + j] = rng.uniform(-2.0, 2.0);
    }
    in.available.push_back(std::move(avail));
    in.features.push_back(mcvae::ad::Tensor::constant({batch, d}, std::move(v)));
  }
  return in;
}

/// Copy of `in` whose masked rows are overwritten with large random values.
inline mcvae::ModelInput perturb_masked(const mcvae::ModelInput& in, mcvae::Rng& rng) {
  mcvae::ModelInput out;
  out.available = in.available;
  for (std::size_t k = 0; k < in.features.size(); ++k) {
    const auto& f = in.features[k];
    std::vector<double> v(f.values().begin(), f.values().end());
    const std::size_t d = f.cols();
    for (std::size_t r = 0; r < f.rows(); ++r) {
      if (in.available[k][r]) continue;
      for (std::size_t j = 0; j < d; ++j) v[r * d + j] = rng.uniform(-50.0, 50.0);
    }
    out.features.push_back(mcvae::ad::Tensor::constant(f.shape(), std::move(v)));
  }
  return out;
}

}  // namespace fixture
