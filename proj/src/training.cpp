#include "mcvae/training.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace mcvae::training {

using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("train config: batch size must be at least 2 (batch normalization)");
  if (max_epochs == 0) throw std::invalid_argument("train config: max_epochs must be positive");
  if (patience >= max_epochs) throw std::invalid_argument("train config: patience must be below max_epochs");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning rate must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("train config: weight decay must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("train config: dropout must lie in [0, 1)");
  if (!(modality_dropout >= 0.0 && modality_dropout <= 1.0)) {
    throw std::invalid_argument("train config: modality dropout must lie in [0, 1]");
  }
  if (beta_max < 0.0) throw std::invalid_argument("train config: beta_max must be non-negative");
  if (!(warmup_epochs >= 1.0)) throw std::invalid_argument("train config: warm-up must be at least one epoch");
  if (!(temperature > 0.0)) throw std::invalid_argument("train config: temperature must be positive");
  if (latent_dim == 0 || hidden_dim == 0) throw std::invalid_argument("train config: widths must be positive");
}

TrainConfig profile(std::string_view name) {
  TrainConfig c;
  if (name == "luad") return c;
  if (name == "lusc") {
    c.dropout = 0.158;
    c.beta_max = 0.106;
    c.learning_rate = 1.95e-4;
    c.weight_decay = 5.88e-4;
    c.batch_size = 64;
    return c;
  }
  throw std::invalid_argument("unknown profile '" + std::string(name) + "' (expected luad or lusc)");
}

ModelConfig model_config(const TrainConfig& cfg, const std::array<std::size_t, data::kModalities>& dims) {
  ModelConfig m;
  m.modalities = standard_modalities(dims[0], dims[1], dims[2], dims[3]);
  m.latent_dim = cfg.latent_dim;
  m.hidden_dim = cfg.hidden_dim;
  m.dropout = cfg.dropout;
  return m;
}

StopCheck early_stop_check(TrainState& state, std::size_t epoch, double validation_c_index, std::size_t patience) {
  StopCheck out;
  if (validation_c_index > state.best_validation + kImprovementTolerance) {
    state.best_validation = validation_c_index;
    state.best_epoch = epoch;
    state.since_improvement = 0;
    out.improved = true;
  } else {
    ++state.since_improvement;
  }
  if (state.since_improvement >= patience) out.decision = StopDecision::kStop;
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(const data::Cohort& cohort, std::size_t batch_size, Rng& rng) {
  const std::size_t n = cohort.size();
  if (n == 0) return {};
  const std::size_t count = (n + batch_size - 1) / batch_size;
  std::vector<std::size_t> events;
  std::vector<std::size_t> censored;
  for (std::size_t i = 0; i < n; ++i) (cohort.records[i].event ? events : censored).push_back(i);
  shuffle(events, rng);
  shuffle(censored, rng);
  std::vector<std::vector<std::size_t>> batches(count);
  std::size_t p = 0;
  for (auto i : events) batches[p++ % count].push_back(i);
  for (auto i : censored) batches[p++ % count].push_back(i);
  for (auto& b : batches) shuffle(b, rng);
  shuffle(batches, rng);
  return batches;
}

ModelInput make_input(const data::Cohort& cohort, const std::vector<std::size_t>& rows,
                      const std::vector<data::Mask>& masks) {
  const std::size_t b = rows.size();
  ModelInput input;
  input.features.reserve(data::kModalities);
  input.available.assign(data::kModalities, std::vector<std::uint8_t>(b, 0));
  for (std::size_t k = 0; k < data::kModalities; ++k) {
    const std::size_t d = cohort.dims[k];
    std::vector<double> values(b * d, 0.0);
    for (std::size_t r = 0; r < b; ++r) {
      const auto& rec = cohort.records[rows[r]];
      const bool on = masks[r][k] && rec.available[k];
      input.available[k][r] = on ? 1 : 0;
      if (on) std::copy(rec.features[k].begin(), rec.features[k].end(), values.begin() + static_cast<std::ptrdiff_t>(r * d));
    }
    input.features.push_back(Tensor::constant({b, d}, std::move(values)));
  }
  return input;
}

losses::CombinedLoss batch_loss(McvaeModel& model, const data::Cohort& cohort, const std::vector<std::size_t>& rows,
                                const std::vector<data::Mask>& masks, double beta, double temperature, Mode mode,
                                Rng& rng) {
  const ModelInput input = make_input(cohort, rows, masks);
  const std::size_t b = rows.size();
  ForwardResult fr = model.forward(input, mode, rng, /*reconstruct=*/true);

  std::vector<double> times(b);
  std::vector<std::uint8_t> events(b);
  for (std::size_t r = 0; r < b; ++r) {
    times[r] = cohort.records[rows[r]].time;
    events[r] = cohort.records[rows[r]].event;
  }
  losses::LossComponents parts;
  parts.task = losses::cox_loss(fr.log_hazard, times, events);

  std::vector<losses::ModalityReconstruction> terms;
  for (std::size_t k = 0; k < fr.reconstructions.size(); ++k) {
    if (!fr.reconstructions[k]) continue;
    terms.push_back({ad::gather_rows(input.features[k], fr.latents[k].rows), *fr.reconstructions[k]});
  }
  parts.reconstruction = losses::reconstruction_loss(terms, b);
  parts.kl = losses::kl_loss(fr.latents, model.kl_logits(), b) * beta;
  parts.contrastive = losses::contrastive_loss(fr.latents, temperature);
  return losses::total_loss(parts, model.loss_log_vars(), beta);
}

namespace {

double validation_index(McvaeModel& model, const data::Cohort& validation_set) {
  const auto result = evaluate(model, validation_set);
  if (!result.c_index) throw TrainingError("validation set has no comparable pair");
  return *result.c_index;
}

}  // namespace

TrainState train(McvaeModel& model, const data::Cohort& train_set, const data::Cohort& validation_set,
                 const TrainConfig& cfg, Rng& rng, const TrainHooks& hooks) {
  cfg.validate();
  if (train_set.size() < 2) throw TrainingError("training set needs at least 2 patients");
  if (std::none_of(train_set.records.begin(), train_set.records.end(), [](const auto& r) { return r.event; })) {
    throw TrainingError("training set contains no event");
  }
  if (!hooks.validator && !survival::concordance(std::vector<double>(validation_set.size(), 0.0),
                                                 validation_set.outcomes()).comparable) {
    throw TrainingError("validation set has no comparable pair");
  }

  const nn::StateList params = model.state();
  nn::AdamW optimizer({cfg.learning_rate, cfg.weight_decay, 0.9, 0.999, 1e-8});
  TrainState state;
  McvaeModel best = model.clone();

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double beta = losses::beta_schedule(static_cast<double>(epoch), cfg.warmup_epochs, cfg.beta_max);
    Rng epoch_rng = rng.fork(epoch);
    auto batches = make_batches(train_set, cfg.batch_size, epoch_rng);

    EpochRecord record;
    record.epoch = epoch;
    record.loss.beta = beta;
    std::size_t task_batches = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& rows = batches[bi];
      std::vector<data::Mask> masks;
      masks.reserve(rows.size());
      for (auto r : rows) {
        masks.push_back(data::modality_dropout_mask(train_set.records[r].available, cfg.modality_dropout, epoch_rng));
      }
      nn::zero_grad(params);
      try {
        const auto combined = batch_loss(model, train_set, rows, masks, beta, cfg.temperature, Mode::kTrain, epoch_rng);
        ad::backward(combined.total);
        optimizer.step(params);
        const auto& b = combined.breakdown;
        if (b.task_skipped) {
          ++record.cox_skipped;
        } else {
          record.loss.task += b.task;
          ++task_batches;
        }
        record.loss.reconstruction += b.reconstruction;
        record.loss.kl += b.kl;
        record.loss.contrastive += b.contrastive;
        record.loss.total += b.total;
      } catch (const losses::NonFiniteLoss& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(bi) + ": " + e.what());
      } catch (const nn::NonFiniteGradient& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(bi) + ": " + e.what());
      }
    }
    nn::zero_grad(params);
    record.batches = batches.size();
    const double nb = static_cast<double>(batches.size());
    record.loss.task = task_batches ? record.loss.task / static_cast<double>(task_batches) : 0.0;
    record.loss.task_skipped = task_batches == 0;
    record.loss.reconstruction /= nb;
    record.loss.kl /= nb;
    record.loss.contrastive /= nb;
    record.loss.total /= nb;
    for (std::size_t i = 0; i < 4; ++i) record.loss.weights[i] = 0.5 * std::exp(-model.loss_log_vars().values()[i]);

    record.validation_c_index = hooks.validator ? hooks.validator(model, epoch) : validation_index(model, validation_set);
    const StopCheck check = early_stop_check(state, epoch, record.validation_c_index, cfg.patience);
    record.improved = check.improved;
    if (check.improved) best.assign_from(model);
    state.epoch = epoch + 1;
    state.history.push_back(record);
    if (hooks.on_epoch) hooks.on_epoch(record);
    if (check.decision == StopDecision::kStop) {
      state.stopped_early = true;
      break;
    }
  }
  model.assign_from(best);
  return state;
}

std::vector<double> predict_risks(McvaeModel& model, const data::Cohort& cohort) {
  if (cohort.size() == 0) return {};
  std::vector<std::size_t> rows(cohort.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  std::vector<data::Mask> masks(rows.size(), data::Mask{1, 1, 1, 1});
  const ModelInput input = make_input(cohort, rows, masks);
  Rng unused(0);
  const ForwardResult fr = model.forward(input, Mode::kEval, unused, /*reconstruct=*/false);
  const auto v = fr.log_hazard.values();
  return {v.begin(), v.end()};
}

Evaluation evaluate(McvaeModel& model, const data::Cohort& cohort) {
  Evaluation out;
  out.risks = predict_risks(model, cohort);
  out.c_index = survival::c_index(out.risks, cohort.outcomes());
  out.all_ties = !out.risks.empty() &&
                 std::all_of(out.risks.begin(), out.risks.end(), [&](double r) { return r == out.risks.front(); });
  return out;
}

std::string epoch_record_json(const EpochRecord& r) {
  json j{{"epoch", r.epoch},
         {"task", r.loss.task},
         {"reconstruction", r.loss.reconstruction},
         {"kl", r.loss.kl},
         {"contrastive", r.loss.contrastive},
         {"total", r.loss.total},
         {"beta", r.loss.beta},
         {"weights", r.loss.weights},
         {"task_skipped", r.loss.task_skipped},
         {"cox_skipped_batches", r.cox_skipped},
         {"batches", r.batches},
         {"validation_c_index", r.validation_c_index},
         {"improved", r.improved}};
  return j.dump();
}

std::string train_config_json(const TrainConfig& c) {
  json j{{"batch_size", c.batch_size},       {"max_epochs", c.max_epochs},
         {"patience", c.patience},           {"learning_rate", c.learning_rate},
         {"weight_decay", c.weight_decay},   {"dropout", c.dropout},
         {"modality_dropout", c.modality_dropout}, {"beta_max", c.beta_max},
         {"warmup_epochs", c.warmup_epochs}, {"temperature", c.temperature},
         {"latent_dim", c.latent_dim},       {"hidden_dim", c.hidden_dim},
         {"seed", c.seed}};
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text, TrainConfig c) {
  const json j = json::parse(text);
  auto read = [&j](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  for (const auto& [key, _] : j.items()) {
    static const char* known[] = {"batch_size", "max_epochs", "patience", "learning_rate", "weight_decay",
                                  "dropout", "modality_dropout", "beta_max", "warmup_epochs", "temperature",
                                  "latent_dim", "hidden_dim", "seed"};
    if (std::none_of(std::begin(known), std::end(known), [&](const char* k) { return key == k; })) {
      throw std::invalid_argument("unknown training option '" + key + "'");
    }
  }
  read("batch_size", c.batch_size);
  read("max_epochs", c.max_epochs);
  read("patience", c.patience);
  read("learning_rate", c.learning_rate);
  read("weight_decay", c.weight_decay);
  read("dropout", c.dropout);
  read("modality_dropout", c.modality_dropout);
  read("beta_max", c.beta_max);
  read("warmup_epochs", c.warmup_epochs);
  read("temperature", c.temperature);
  read("latent_dim", c.latent_dim);
  read("hidden_dim", c.hidden_dim);
  read("seed", c.seed);
  return c;
}

}  // namespace mcvae::training
