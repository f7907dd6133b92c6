#include "mcvae/model.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace mcvae {

using nlohmann::json;

std::vector<ModalitySpec> standard_modalities(std::size_t clinical_dim, std::size_t transcriptomics_dim,
                                              std::size_t wsi_dim, std::size_t methylation_dim) {
  return {
      {"clinical", 'C', clinical_dim, 2, false},
      {"transcriptomics", 'T', transcriptomics_dim, 3, true},
      {"wsi", 'W', wsi_dim, 2, true},
      {"methylation", 'M', methylation_dim, 3, true},
  };
}

void ModelConfig::validate() const {
  if (modalities.empty()) throw std::invalid_argument("model: no modalities configured");
  if (modalities[kClinical].reconstructable) {
    throw std::invalid_argument("model: modality 0 is the clinical anchor and must not be reconstructable");
  }
  for (const auto& m : modalities) {
    if (m.input_dim == 0) throw std::invalid_argument("model: modality '" + m.name + "' has zero input dimension");
    if (m.depth < 2) throw std::invalid_argument("model: modality '" + m.name + "' encoder depth must be >= 2");
  }
  if (latent_dim == 0 || hidden_dim == 0) throw std::invalid_argument("model: latent and hidden widths must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("model: dropout must lie in [0, 1)");
}

ModalityLatent missing_latent(std::size_t batch_size, std::size_t latent_dim) {
  ModalityLatent latent;
  latent.z_full = Tensor::constant({batch_size, latent_dim}, 0.0);
  return latent;
}

Tensor reparameterize(const Tensor& mu, const Tensor& log_var, const Tensor& noise) {
  if (noise.shape() != mu.shape()) {
    throw ad::ShapeError("reparameterize: noise shape " + ad::to_string(noise.shape()) + " does not match mu " +
                         ad::to_string(mu.shape()));
  }
  return mu + ad::exp(ad::scale(log_var, 0.5)) * noise;
}

// -- Encoder / Decoder ---------------------------------------------------------

Encoder::Encoder(const ModalitySpec& spec, std::size_t hidden, std::size_t latent, double dropout, Rng& rng)
    : dropout_(dropout) {
  std::size_t in = spec.input_dim;
  for (std::size_t l = 0; l + 1 < spec.depth; ++l) {
    hidden_.emplace_back(in, hidden, rng);
    norms_.emplace_back(hidden);
    in = hidden;
  }
  mu_head_ = nn::DenseLayer(in, latent, rng);
  log_var_head_ = nn::DenseLayer(in, latent, rng);
}

Encoder::Output Encoder::forward(const Tensor& x, Mode mode, Rng& rng, bool batch_stats) {
  const Mode norm_mode = (mode == Mode::kTrain && batch_stats) ? Mode::kTrain : Mode::kEval;
  Tensor h = nn::feature_dropout(x, dropout_, mode, rng);
  for (std::size_t l = 0; l < hidden_.size(); ++l) {
    h = nn::feature_dropout(ad::relu(norms_[l].forward(hidden_[l].forward(h), norm_mode)), dropout_, mode, rng);
  }
  return {mu_head_.forward(h), ad::clamp(log_var_head_.forward(h), kLogVarMin, kLogVarMax)};
}

void Encoder::collect(nn::StateList& out, const std::string& prefix) const {
  for (std::size_t l = 0; l < hidden_.size(); ++l) {
    hidden_[l].collect(out, prefix + ".layer" + std::to_string(l) + ".dense");
    norms_[l].collect(out, prefix + ".layer" + std::to_string(l) + ".norm");
  }
  mu_head_.collect(out, prefix + ".mu_head");
  log_var_head_.collect(out, prefix + ".log_var_head");
}

Decoder::Decoder(std::size_t latent, std::size_t hidden, std::size_t output, double dropout, Rng& rng)
    : hidden_(latent, hidden, rng), norm_(hidden), output_(hidden, output, rng), dropout_(dropout) {}

Tensor Decoder::forward(const Tensor& z, Mode mode, Rng& rng, bool batch_stats) {
  const Mode norm_mode = (mode == Mode::kTrain && batch_stats) ? Mode::kTrain : Mode::kEval;
  const Tensor h = nn::feature_dropout(ad::relu(norm_.forward(hidden_.forward(z), norm_mode)), dropout_, mode, rng);
  return output_.forward(h);
}

void Decoder::collect(nn::StateList& out, const std::string& prefix) const {
  hidden_.collect(out, prefix + ".layer0.dense");
  norm_.collect(out, prefix + ".layer0.norm");
  output_.collect(out, prefix + ".output");
}

// -- McvaeModel --------------------------------------------------------------------

McvaeModel::McvaeModel(ModelConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  const std::size_t k_count = config_.modalities.size();
  for (const auto& spec : config_.modalities) {
    encoders_.emplace_back(spec, config_.hidden_dim, config_.latent_dim, config_.dropout, rng);
  }
  for (const auto& spec : config_.modalities) {
    if (spec.reconstructable) {
      decoders_.emplace_back(Decoder(config_.latent_dim, config_.hidden_dim, spec.input_dim, config_.dropout, rng));
    } else {
      decoders_.emplace_back(std::nullopt);
    }
  }
  fusion_norm_ = nn::LayerNorm(config_.latent_dim);
  survival_head_ = nn::DenseLayer(config_.latent_dim, 1, rng, nn::Activation::kNone, /*bias=*/false);
  gates_ = Tensor::parameter({k_count}, std::vector<double>(k_count, 0.0));
  kl_logits_ = Tensor::parameter({k_count}, std::vector<double>(k_count, 0.0));
  loss_log_vars_ = Tensor::parameter({kLossTerms}, std::vector<double>(kLossTerms, 0.0));
}

Decoder& McvaeModel::decoder(std::size_t k) {
  auto& d = decoders_.at(k);
  if (!d) throw std::invalid_argument("modality '" + config_.modalities[k].name + "' is not reconstructed");
  return *d;
}

ModalityLatent McvaeModel::encode(std::size_t k, const Tensor& x, std::vector<std::size_t> rows,
                                  std::size_t batch_size, Mode mode, Rng& rng) {
  const auto& spec = config_.modalities.at(k);
  if (x.rank() != 2 || x.cols() != spec.input_dim) {
    throw ad::ShapeError("encode: modality '" + spec.name + "' expects " + std::to_string(spec.input_dim) +
                         " features, got shape " + ad::to_string(x.shape()));
  }
  if (x.rows() != rows.size()) throw ad::ShapeError("encode: row index count does not match input rows");

  const bool batch_stats = rows.size() >= 2;
  auto [mu, log_var] = encoders_[k].forward(x, mode, rng, batch_stats);
  ModalityLatent latent;
  latent.mu = mu;
  latent.log_var = log_var;
  if (mode == Mode::kTrain) {
    std::vector<double> noise(mu.size());
    for (auto& e : noise) e = rng.normal();
    latent.z = reparameterize(mu, log_var, Tensor::constant(mu.shape(), std::move(noise)));
  } else {
    latent.z = mu;
  }
  latent.z_full = ad::scatter_rows(latent.z, rows, batch_size);
  latent.rows = std::move(rows);
  return latent;
}

Tensor McvaeModel::aggregate(const std::vector<ModalityLatent>& latents, std::size_t batch_size) const {
  if (latents.size() != modality_count()) throw std::invalid_argument("fuse: expected one latent per modality");
  std::vector<double> counts(batch_size, 0.0);
  for (const auto& l : latents) {
    for (auto r : l.rows) counts[r] += 1.0;
  }
  for (std::size_t r = 0; r < batch_size; ++r) {
    if (counts[r] == 0.0) throw std::invalid_argument("fuse: row " + std::to_string(r) + " has no available modality");
    counts[r] = 1.0 / counts[r];
  }

  const Tensor gate = ad::sigmoid(gates_);
  Tensor total;
  for (std::size_t k = 0; k < latents.size(); ++k) {
    if (!latents[k].any_available()) continue;
    std::vector<double> mask(batch_size, 0.0);
    for (auto r : latents[k].rows) mask[r] = 1.0;
    const std::size_t idx[] = {k};
    const Tensor term =
        latents[k].z_full * ad::take(gate, idx) * Tensor::constant({batch_size, 1}, std::move(mask));
    total = total.defined() ? total + term : term;
  }
  return total * Tensor::constant({batch_size, 1}, std::move(counts));
}

Tensor McvaeModel::fusion_block(const Tensor& v, Mode mode, Rng& rng) {
  return v + nn::feature_dropout(ad::gelu(fusion_norm_.forward(v)), config_.dropout, mode, rng);
}

Tensor McvaeModel::fuse(const std::vector<ModalityLatent>& latents, std::size_t batch_size, Mode mode, Rng& rng) {
  return fusion_block(aggregate(latents, batch_size), mode, rng);
}

Tensor McvaeModel::decode(std::size_t k, const Tensor& fused_rows, Mode mode, Rng& rng) {
  if (k >= modality_count()) throw std::out_of_range("decode: modality index out of range");
  if (!decoders_[k]) throw std::invalid_argument("decode: modality '" + config_.modalities[k].name + "' is not reconstructed");
  return decoders_[k]->forward(fused_rows, mode, rng, fused_rows.rows() >= 2);
}

Tensor McvaeModel::predict_log_hazard(const Tensor& fused) const { return survival_head_.forward(fused); }

ForwardResult McvaeModel::forward(const ModelInput& input, Mode mode, Rng& rng, bool reconstruct) {
  const std::size_t k_count = modality_count();
  if (input.features.size() != k_count || input.available.size() != k_count) {
    throw std::invalid_argument("forward: input must carry every modality");
  }
  const std::size_t batch = input.batch_size();
  ForwardResult out;
  out.latents.reserve(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    if (input.available[k].size() != batch) throw std::invalid_argument("forward: availability length mismatch");
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < batch; ++r) {
      if (input.available[k][r]) rows.push_back(r);
    }
    if (rows.empty()) {
      out.latents.push_back(missing_latent(batch, config_.latent_dim));
      continue;
    }
    const Tensor x = ad::gather_rows(input.features[k], rows);
    out.latents.push_back(encode(k, x, std::move(rows), batch, mode, rng));
  }
  out.fused = fuse(out.latents, batch, mode, rng);
  out.log_hazard = predict_log_hazard(out.fused);
  out.reconstructions.resize(k_count);
  if (reconstruct) {
    for (std::size_t k = 0; k < k_count; ++k) {
      if (!decoders_[k] || !out.latents[k].any_available()) continue;
      out.reconstructions[k] = decode(k, ad::gather_rows(out.fused, out.latents[k].rows), mode, rng);
    }
  }
  return out;
}

nn::StateList McvaeModel::state() const {
  nn::StateList out;
  for (std::size_t k = 0; k < encoders_.size(); ++k) {
    encoders_[k].collect(out, "encoder." + config_.modalities[k].name);
  }
  for (std::size_t k = 0; k < decoders_.size(); ++k) {
    if (decoders_[k]) decoders_[k]->collect(out, "decoder." + config_.modalities[k].name);
  }
  fusion_norm_.collect(out, "fusion.norm");
  survival_head_.collect(out, "survival_head");
  out.push_back({"fusion.gates", gates_, true});
  out.push_back({"loss.kl_logits", kl_logits_, true});
  out.push_back({"loss.log_vars", loss_log_vars_, true});
  return out;
}

McvaeModel McvaeModel::clone() const {
  Rng scratch(0);
  McvaeModel copy(config_, scratch);
  copy.assign_from(*this);
  return copy;
}

void McvaeModel::assign_from(const McvaeModel& other) {
  const auto dst = state();
  const auto src = other.state();
  if (dst.size() != src.size()) throw std::invalid_argument("assign_from: model layouts differ");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].name != src[i].name || dst[i].tensor.shape() != src[i].tensor.shape()) {
      throw std::invalid_argument("assign_from: tensor '" + src[i].name + "' does not match");
    }
    Tensor t = dst[i].tensor;
    const auto v = src[i].tensor.values();
    std::copy(v.begin(), v.end(), t.mutable_values().begin());
  }
}

// -- serialization ---------------------------------------------------------------

std::string model_config_to_json(const ModelConfig& config) {
  json j;
  j["latent_dim"] = config.latent_dim;
  j["hidden_dim"] = config.hidden_dim;
  j["dropout"] = config.dropout;
  for (const auto& m : config.modalities) {
    j["modalities"].push_back({{"name", m.name},
                               {"code", std::string(1, m.code)},
                               {"input_dim", m.input_dim},
                               {"depth", m.depth},
                               {"reconstructable", m.reconstructable}});
  }
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  ModelConfig c;
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  for (const auto& m : j.at("modalities")) {
    ModalitySpec s;
    s.name = m.at("name").get<std::string>();
    s.code = m.at("code").get<std::string>().at(0);
    s.input_dim = m.at("input_dim").get<std::size_t>();
    s.depth = m.at("depth").get<std::size_t>();
    s.reconstructable = m.at("reconstructable").get<bool>();
    c.modalities.push_back(std::move(s));
  }
  c.validate();
  return c;
}

namespace {
constexpr char kMagic[8] = {'M', 'C', 'V', 'A', 'E', 'C', 'K', '1'};
static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const McvaeModel& model, const std::string& metadata_json) {
  const auto state = model.state();
  json header;
  header["format_version"] = 1;
  header["model"] = json::parse(model_config_to_json(model.config()));
  header["metadata"] = metadata_json.empty() ? json::object() : json::parse(metadata_json);
  for (const auto& t : state) {
    header["tensors"].push_back({{"name", t.name}, {"shape", t.tensor.shape()}, {"trainable", t.trainable}});
  }
  const std::string header_text = header.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open '" + tmp.string() + "' for writing");
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t len = header_text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(header_text.data(), static_cast<std::streamsize>(len));
    for (const auto& t : state) {
      const auto v = t.tensor.values();
      out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
    }
    if (!out) throw CheckpointError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(std::begin(magic), std::end(magic), std::begin(kMagic))) {
    throw CheckpointError("'" + path.string() + "' is not a model checkpoint");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_text(len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError("truncated checkpoint header in '" + path.string() + "'");
  const json header = json::parse(header_text);

  Rng scratch(0);
  LoadedCheckpoint loaded{McvaeModel(model_config_from_json(header.at("model").dump()), scratch),
                          header.at("metadata").dump()};
  const auto state = loaded.model.state();
  const auto& index = header.at("tensors");
  if (index.size() != state.size()) throw CheckpointError("checkpoint tensor count does not match the model layout");
  for (std::size_t i = 0; i < state.size(); ++i) {
    const auto name = index[i].at("name").get<std::string>();
    const auto shape = index[i].at("shape").get<ad::Shape>();
    if (name != state[i].name || shape != state[i].tensor.shape()) {
      throw CheckpointError("checkpoint tensor '" + name + "' does not match model tensor '" + state[i].name + "'");
    }
    Tensor t = state[i].tensor;
    auto dst = t.mutable_values();
    in.read(reinterpret_cast<char*>(dst.data()), static_cast<std::streamsize>(dst.size_bytes()));
    if (!in) throw CheckpointError("truncated checkpoint payload at tensor '" + name + "'");
  }
  return loaded;
}

}  // namespace mcvae
