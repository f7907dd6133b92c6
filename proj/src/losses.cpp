#include "mcvae/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mcvae::losses {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Tensor zero() { return Tensor::scalar(0.0); }
}  // namespace

std::optional<Tensor> cox_loss(const Tensor& log_hazards, std::span<const double> times,
                               std::span<const std::uint8_t> events) {
  const std::size_t n = log_hazards.size();
  if (times.size() != n || events.size() != n) {
    throw std::invalid_argument("cox_loss: " + std::to_string(n) + " log-hazards but " +
                                std::to_string(times.size()) + " times and " + std::to_string(events.size()) +
                                " event flags");
  }
  std::vector<std::size_t> event_rows;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(times[i] > 0.0)) throw std::invalid_argument("cox_loss: times must be positive");
    if (events[i] > 1) throw std::invalid_argument("cox_loss: event flags must be 0 or 1");
    if (events[i]) event_rows.push_back(i);
  }
  if (event_rows.empty()) return std::nullopt;

  // Row e of the mask keeps the risk set of event e, every other entry is -inf.
  std::vector<double> mask(event_rows.size() * n, kNegInf);
  for (std::size_t e = 0; e < event_rows.size(); ++e) {
    const double t = times[event_rows[e]];
    for (std::size_t j = 0; j < n; ++j) {
      if (times[j] >= t) mask[e * n + j] = 0.0;
    }
  }
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  const Tensor f_row = ad::take(log_hazards, all);
  const Tensor log_risk = ad::logsumexp(f_row + Tensor::constant({event_rows.size(), n}, std::move(mask)), 1);
  return ad::sum(log_risk) - ad::sum(ad::take(log_hazards, event_rows));
}

Tensor reconstruction_loss(std::span<const ModalityReconstruction> terms, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("reconstruction_loss: empty batch");
  Tensor total;
  for (const auto& term : terms) {
    if (term.target.shape() != term.reconstruction.shape()) {
      throw ad::ShapeError("reconstruction_loss: target " + ad::to_string(term.target.shape()) +
                           " vs reconstruction " + ad::to_string(term.reconstruction.shape()));
    }
    const Tensor err = ad::sum(ad::square(term.reconstruction - term.target));
    total = total.defined() ? total + err : err;
  }
  if (!total.defined()) return zero();
  return total * (1.0 / static_cast<double>(batch_size));
}

Tensor reconstruction_loss(const std::vector<Tensor>& targets, const std::vector<Tensor>& reconstructions,
                           const std::vector<std::vector<std::uint8_t>>& available) {
  if (targets.size() != reconstructions.size() || targets.size() != available.size()) {
    throw std::invalid_argument("reconstruction_loss: per-modality inputs differ in length");
  }
  std::vector<ModalityReconstruction> terms;
  std::size_t batch = 0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    batch = std::max(batch, available[k].size());
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < available[k].size(); ++r) {
      if (available[k][r]) rows.push_back(r);
    }
    if (rows.empty() || !reconstructions[k].defined()) continue;
    terms.push_back({ad::gather_rows(targets[k], rows), ad::gather_rows(reconstructions[k], rows)});
  }
  return reconstruction_loss(terms, std::max<std::size_t>(batch, 1));
}

Tensor kl_loss(const std::vector<ModalityLatent>& latents, const Tensor& kl_logits, std::size_t batch_size) {
  if (kl_logits.size() != latents.size()) throw std::invalid_argument("kl_loss: one logit per modality required");
  if (batch_size == 0) throw std::invalid_argument("kl_loss: empty batch");
  const Tensor weights = ad::softmax(kl_logits, 1);
  Tensor total;
  for (std::size_t k = 0; k < latents.size(); ++k) {
    const auto& l = latents[k];
    if (!l.any_available()) continue;
    // 0.5 * sum(mu^2 + sigma^2 - log sigma^2 - 1)
    const Tensor kl = ad::sum(ad::square(l.mu) + ad::exp(l.log_var) - l.log_var + (-1.0)) * 0.5;
    const std::size_t idx[] = {k};
    const Tensor term = kl * ad::take(weights, idx);
    total = total.defined() ? total + term : term;
  }
  if (!total.defined()) return zero();
  return total * (1.0 / static_cast<double>(batch_size));
}

Tensor contrastive_loss(const std::vector<ModalityLatent>& latents, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("contrastive_loss: temperature must be positive");
  std::vector<Tensor> blocks;
  std::vector<std::size_t> owner;
  for (const auto& l : latents) {
    if (!l.any_available()) continue;
    blocks.push_back(l.z);
    owner.insert(owner.end(), l.rows.begin(), l.rows.end());
  }
  const std::size_t m = owner.size();
  std::vector<std::size_t> positives;
  std::vector<std::size_t> anchors;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      if (r != c && owner[r] == owner[c]) {
        positives.push_back(r * m + c);
        anchors.push_back(r);
      }
    }
  }
  if (positives.empty()) return zero();

  const Tensor z = blocks.size() == 1 ? blocks.front() : ad::concat(blocks, 0);
  const Tensor logits = ad::cosine_similarity(z, z) * (1.0 / temperature);
  std::vector<double> self_mask(m * m, 0.0);
  for (std::size_t r = 0; r < m; ++r) self_mask[r * m + r] = kNegInf;
  const Tensor log_denominator = ad::logsumexp(logits + Tensor::constant({m, m}, std::move(self_mask)), 1);
  const Tensor numerators = ad::take(logits, positives);
  const Tensor denominators = ad::take(log_denominator, anchors);
  return (ad::sum(denominators) - ad::sum(numerators)) * (1.0 / static_cast<double>(positives.size()));
}

double beta_schedule(double epoch, double warmup_epochs, double beta_max) {
  if (!(warmup_epochs >= 1.0)) throw std::invalid_argument("beta_schedule: warm-up must be at least one epoch");
  if (epoch <= 0.0) return 0.0;
  return beta_max * std::min(1.0, epoch / warmup_epochs);
}

CombinedLoss total_loss(const LossComponents& components, const Tensor& log_vars, double beta) {
  if (log_vars.size() != 4) throw std::invalid_argument("total_loss: expected 4 uncertainty log-variances");
  const std::array<const Tensor*, 4> terms = {components.task ? &*components.task : nullptr,
                                               &components.reconstruction, &components.kl, &components.contrastive};
  CombinedLoss out;
  out.breakdown.beta = beta;
  out.breakdown.task_skipped = !components.task.has_value();
  std::array<double*, 4> slots = {&out.breakdown.task, &out.breakdown.reconstruction, &out.breakdown.kl,
                                  &out.breakdown.contrastive};
  Tensor total;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const double s = log_vars.values()[i];
    out.breakdown.weights[i] = 0.5 * std::exp(-s);
    if (terms[i] == nullptr) continue;
    const double value = terms[i]->item();
    if (!std::isfinite(value)) throw NonFiniteLoss(kTermNames[i]);
    *slots[i] = value;
    const std::size_t idx[] = {i};
    const Tensor s_i = ad::take(log_vars, idx);
    const Tensor weighted = ad::exp(-s_i) * (*terms[i]) * 0.5 + s_i * 0.5;
    total = total.defined() ? total + weighted : weighted;
  }
  out.total = ad::sum(total);
  out.breakdown.total = out.total.item();
  if (!std::isfinite(out.breakdown.total)) throw NonFiniteLoss("total");
  return out;
}

}  // namespace mcvae::losses
