#include "ssmae/model.hpp"

#include <cmath>

#include "ssmae/container.hpp"
#include "ssmae/error.hpp"
#include "ssmae/ops.hpp"

namespace ssmae {

namespace {

enum Stream : std::uint64_t { spatial_stream = 1, spectral_stream, irb_aux_stream, irb_hsi_stream, classifier_stream };

void require_shape(const Tensor& t, const Shape& want, const char* what) {
  if (t.shape() != want) {
    fail(Errc::contract, std::string(what) + ": expected " + shape_str(want) + ", got " + shape_str(t.shape()));
  }
}

void check_patch(const ModelConfig& cfg, const Patch& p) {
  const auto P = cfg.transformer.patch_size;
  require_shape(p.x1, {cfg.aux_channels, P, P}, "patch x1");
  require_shape(p.x2, {cfg.hsi_channels, P, P}, "patch x2");
}

std::vector<double> manifest_values(const ModelConfig& cfg) {
  const auto& t = cfg.transformer;
  return {double(t.patch_size), double(t.token_dim), double(t.blocks),       double(t.heads),
          double(cfg.aux_channels), double(cfg.hsi_channels), double(cfg.num_classes), double(cfg.irb_depth)};
}

ModelConfig config_from_manifest(const StoredTensor& m) {
  if (m.values.size() != 8) fail(Errc::format, "checkpoint manifest holds " + std::to_string(m.values.size()) + " values, expected 8");
  ModelConfig cfg;
  auto at = [&](std::size_t i) { return static_cast<std::size_t>(m.values[i]); };
  cfg.transformer.patch_size = at(0);
  cfg.transformer.token_dim = at(1);
  cfg.transformer.blocks = at(2);
  cfg.transformer.heads = at(3);
  cfg.aux_channels = at(4);
  cfg.hsi_channels = at(5);
  cfg.num_classes = at(6);
  cfg.irb_depth = at(7);
  cfg.transformer.channels = cfg.aux_channels + cfg.hsi_channels;
  return cfg;
}

void copy_into(const NamedTensor& dst, const std::vector<StoredTensor>& entries) {
  const auto& src = find_entry(entries, dst.name);
  if (src.shape != dst.tensor.shape()) {
    fail(Errc::format, "entry '" + dst.name + "' has shape " + shape_str(src.shape) + ", model expects " +
                           shape_str(dst.tensor.shape()));
  }
  Tensor t = dst.tensor;
  auto out = t.mutable_data();
  std::copy(src.values.begin(), src.values.end(), out.begin());
}

bool is_encoder_name(const std::string& name) {
  for (const char* prefix : {"spa.embed_", "spa.enc", "spe.embed_", "spe.enc"}) {
    if (name.rfind(prefix, 0) == 0) return true;
  }
  return false;
}

}  // namespace

void ModelConfig::validate() const {
  transformer.validate();
  if (aux_channels == 0 || hsi_channels == 0) fail(Errc::config, "aux_channels and hsi_channels must be positive");
  if (transformer.channels != aux_channels + hsi_channels) {
    fail(Errc::config, "channels " + std::to_string(transformer.channels) + " != aux_channels + hsi_channels");
  }
  if (num_classes == 1) fail(Errc::config, "num_classes must be 0 (no classifier) or at least 2");
}

std::vector<std::size_t> ModelConfig::protected_bands() const {
  if (aux_channels == 1) return {0};
  return {};
}

Model Model::create(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  Rng spa(mix_seed(seed, spatial_stream)), spe(mix_seed(seed, spectral_stream));
  Rng aux(mix_seed(seed, irb_aux_stream)), hsi(mix_seed(seed, irb_hsi_stream));
  m.spatial = BranchParams::create(MaskMode::spatial, cfg.transformer, spa);
  m.spectral = BranchParams::create(MaskMode::spectral, cfg.transformer, spe);
  m.irb_aux = IrbStack::create(cfg.aux_channels, false, cfg.irb_depth, cfg.transformer.token_dim, aux);
  m.irb_hsi = IrbStack::create(cfg.hsi_channels, true, cfg.irb_depth, cfg.transformer.token_dim, hsi);
  if (cfg.num_classes > 0) m.add_classifier(cfg.num_classes, seed);
  return m;
}

void Model::add_classifier(std::size_t num_classes, std::uint64_t seed) {
  if (num_classes < 2) fail(Errc::config, "classifier needs at least 2 classes");
  Rng rng(mix_seed(seed, classifier_stream));
  cfg.num_classes = num_classes;
  const auto d = cfg.transformer.token_dim;
  cls_w = init_uniform({d, num_classes}, d, rng);
  cls_b = init_zeros({num_classes});
}

ParamList Model::pretrain_params() const {
  ParamList out;
  spatial.collect_encoder(out, "spa");
  spatial.collect_decoder(out, "spa");
  spectral.collect_encoder(out, "spe");
  spectral.collect_decoder(out, "spe");
  return out;
}

ParamList Model::train_params() const {
  ParamList out;
  spatial.collect_encoder(out, "spa");
  spectral.collect_encoder(out, "spe");
  irb_aux.collect(out, "irb_aux");
  irb_hsi.collect(out, "irb_hsi");
  if (has_classifier()) {
    out.push_back({"cls.w", cls_w});
    out.push_back({"cls.b", cls_b});
  }
  return out;
}

ParamList Model::decoder_params() const {
  ParamList out;
  spatial.collect_decoder(out, "spa");
  spectral.collect_decoder(out, "spe");
  return out;
}

ParamList Model::state() const {
  ParamList out = pretrain_params();
  irb_aux.collect(out, "irb_aux");
  irb_hsi.collect(out, "irb_hsi");
  irb_aux.collect_buffers(out, "irb_aux");
  irb_hsi.collect_buffers(out, "irb_hsi");
  if (has_classifier()) {
    out.push_back({"cls.w", cls_w});
    out.push_back({"cls.b", cls_b});
  }
  return out;
}

Adam::Adam(ParamList params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr >= 0.0) || !(cfg_.eps > 0.0)) fail(Errc::config, "adam: lr must be >= 0 and eps > 0");
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step() {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) fail(Errc::divergence, "non-finite gradient in parameter " + p.name);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor w = params_[k].tensor;
    const bool has = w.has_grad();
    auto g = has ? w.grad() : std::span<const double>{};
    auto x = w.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double gi = has ? g[i] : 0.0;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      x[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
}

LossTerms ssmae_loss(const Tensor& t, const Tensor& r_spa, const Tensor& r_spe, const MaskSpec& spa_spec,
                     const MaskSpec& spe_spec, double lambda) {
  if (spa_spec.mode != MaskMode::spatial || spe_spec.mode != MaskMode::spectral) {
    fail(Errc::contract, "ssmae_loss: expected one spatial and one spectral mask");
  }
  LossTerms out;
  out.spatial = mse_masked(r_spa, t, element_mask(spa_spec, t.shape()));
  out.spectral = mse_masked(r_spe, t, element_mask(spe_spec, t.shape()));
  out.total = add(scale(out.spatial, lambda), out.spectral);
  return out;
}

Tensor concat_patch(const Patch& p) {
  if (p.x1.rank() != 3 || p.x2.rank() != 3 || p.x1.dim(1) != p.x2.dim(1) || p.x1.dim(2) != p.x2.dim(2)) {
    fail(Errc::dimension, "concat_patch: x1 " + shape_str(p.x1.shape()) + " and x2 " + shape_str(p.x2.shape()) +
                              " are not co-registered patches");
  }
  std::vector<double> values(p.x1.data().begin(), p.x1.data().end());
  values.insert(values.end(), p.x2.data().begin(), p.x2.data().end());
  return Tensor({p.x1.dim(0) + p.x2.dim(0), p.x1.dim(1), p.x1.dim(2)}, std::move(values));
}

LossTerms reconstruction_loss(const Model& model, const Tensor& t, const MaskSpec& spa_spec,
                              const MaskSpec& spe_spec, double lambda) {
  const auto& tf = model.cfg.transformer;
  const auto spa_masked = apply_spatial_mask(t, spa_spec);
  const auto spa_enc = encode(tokenize_spatial(spa_masked, model.spatial), model.spatial, tf);
  const Tensor r_spa = decode(spa_enc, spa_spec, model.spatial, tf);
  const auto spe_masked = apply_spectral_mask(t, spe_spec);
  const auto spe_enc = encode(tokenize_spectral(spe_masked, model.spectral), model.spectral, tf);
  const Tensor r_spe = decode(spe_enc, spe_spec, model.spectral, tf);
  return ssmae_loss(t, r_spa, r_spe, spa_spec, spe_spec, lambda);
}

namespace {

// Per-patch reconstruction losses with the masks pretrain_step uses.
std::vector<Tensor> batch_losses(const Model& model, std::span<const Patch> batch, const PretrainOptions& opts,
                                 std::uint64_t seed, StepLog& log) {
  if (batch.empty()) fail(Errc::contract, "pretraining batch is empty");
  const auto& tf = model.cfg.transformer;
  const auto prot = model.cfg.protected_bands();
  std::vector<Tensor> totals;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    check_patch(model.cfg, batch[i]);
    const Tensor t = concat_patch(batch[i]);
    const auto spa_spec = sample_mask(MaskMode::spatial, tf.patch_size * tf.patch_size, opts.ratio_spatial,
                                      mix_seed(seed, 0, i));
    const auto spe_spec = sample_mask(MaskMode::spectral, tf.channels, opts.ratio_spectral, mix_seed(seed, 1, i), prot);
    auto terms = reconstruction_loss(model, t, spa_spec, spe_spec, opts.lambda);
    log.spatial += terms.spatial.item();
    log.spectral += terms.spectral.item();
    totals.push_back(terms.total);
  }
  const double n = static_cast<double>(batch.size());
  log.spatial /= n;
  log.spectral /= n;
  return totals;
}

}  // namespace

StepLog evaluate_reconstruction(const Model& model, std::span<const Patch> patches, const PretrainOptions& opts,
                                std::uint64_t seed) {
  NoGradGuard no_grad;
  StepLog log;
  const auto totals = batch_losses(model, patches, opts, seed, log);
  log.total = mean(stack(totals)).item();
  return log;
}

StepLog pretrain_step(Model& model, Adam& opt, std::span<const Patch> batch, const PretrainOptions& opts,
                      std::uint64_t seed) {
  zero_grads(opt.params());
  StepLog log;
  const auto totals = batch_losses(model, batch, opts, seed, log);
  Tensor loss = mean(stack(totals));
  loss.backward();
  opt.step();
  log.total = loss.item();
  return log;
}

std::vector<Tensor> fused_tokens(Model& model, std::span<const Patch> batch, bool training) {
  if (batch.empty()) fail(Errc::contract, "fused_tokens: empty batch");
  const auto& tf = model.cfg.transformer;
  std::vector<Tensor> x1s, x2s;
  for (const auto& p : batch) {
    check_patch(model.cfg, p);
    x1s.push_back(p.x1);
    x2s.push_back(p.x2);
  }
  const Tensor y1 = run_irb_stack(stack(x1s), model.irb_aux, training);
  const Tensor y2 = run_irb_stack(stack(x2s), model.irb_hsi, training);

  MaskSpec all_pixels{MaskMode::spatial, tf.patch_size * tf.patch_size, {}, {}, 0};
  MaskSpec all_bands{MaskMode::spectral, tf.channels, {}, model.cfg.protected_bands(), 0};
  std::vector<Tensor> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Tensor t = concat_patch(batch[i]);
    const Tensor parts[] = {
        encode(tokenize_spatial(apply_spatial_mask(t, all_pixels), model.spatial), model.spatial, tf).tokens,
        encode(tokenize_spectral(apply_spectral_mask(t, all_bands), model.spectral), model.spectral, tf).tokens,
        irb_tokens(select(y1, i), model.irb_aux).tokens,
        irb_tokens(select(y2, i), model.irb_hsi).tokens,
    };
    out.push_back(concat_rows(parts));
  }
  return out;
}

Tensor classifier_logits(Model& model, std::span<const Patch> batch, bool training) {
  if (!model.has_classifier()) fail(Errc::contract, "model has no classifier");
  std::vector<Tensor> pooled;
  for (const auto& tokens : fused_tokens(model, batch, training)) pooled.push_back(mean_rows(tokens));
  return linear(concat_rows(pooled), model.cls_w, model.cls_b);
}

double train_step(Model& model, Adam& opt, std::span<const Patch> batch) {
  zero_grads(opt.params());
  std::vector<std::size_t> labels;
  for (const auto& p : batch) labels.push_back(p.label);
  Tensor loss = cross_entropy(classifier_logits(model, batch, true), labels);
  loss.backward();
  opt.step();
  return loss.item();
}

Tensor classify(const Model& model, std::span<const Patch> batch) {
  NoGradGuard no_grad;
  Model view = model;  // shallow; inference-mode BN only reads its running statistics
  return classifier_logits(view, batch, false);
}

std::vector<std::size_t> predict(const Model& model, std::span<const Patch> batch) {
  const Tensor logits = classify(model, batch);
  const auto n = logits.dim(0), l = logits.dim(1);
  auto d = logits.data();
  std::vector<std::size_t> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 1; k < l; ++k) {
      if (d[i * l + k] > d[i * l + out[i]]) out[i] = k;
    }
  }
  return out;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::vector<StoredTensor> entries;
  const auto m = manifest_values(model.cfg);
  entries.push_back({"manifest", DType::f64, {m.size()}, m});
  for (const auto& p : model.state()) entries.push_back(StoredTensor::of(p.name, p.tensor));
  write_tensors(path, entries);
}

Model load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(Errc::io, "checkpoint not found: " + path.string());
  const auto entries = read_tensors(path);
  const ModelConfig cfg = config_from_manifest(find_entry(entries, "manifest"));
  Model model = Model::create(cfg, 0);
  for (const auto& p : model.state()) copy_into(p, entries);
  return model;
}

void load_encoders(Model& model, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(Errc::io, "pretrained checkpoint not found: " + path.string());
  const auto entries = read_tensors(path);
  ModelConfig theirs = config_from_manifest(find_entry(entries, "manifest"));
  theirs.num_classes = model.cfg.num_classes;
  if (manifest_values(theirs) != manifest_values(model.cfg)) {
    fail(Errc::config, "pretrained checkpoint " + path.string() + " was built with a different model shape");
  }
  for (const auto& p : model.state()) {
    if (is_encoder_name(p.name)) copy_into(p, entries);
  }
}

}  // namespace ssmae
