#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ssmae/attention.hpp"
#include "ssmae/irb.hpp"
#include "ssmae/masking.hpp"
#include "ssmae/params.hpp"

namespace ssmae {

struct ModelConfig {
  TransformerConfig transformer;  // channels = aux_channels + hsi_channels
  std::size_t aux_channels = 1;   // C1, first in the concatenated patch
  std::size_t hsi_channels = 20;  // C2 (PCA components)
  std::size_t num_classes = 0;    // 0 while pretraining
  std::size_t irb_depth = 3;

  void validate() const;
  /// Bands excluded from spectral masking: the auxiliary band when it is single-band.
  std::vector<std::size_t> protected_bands() const;
};

/// One labeled or unlabeled sample: x1[C1×P×P], x2[C2×P×P].
struct Patch {
  Tensor x1;
  Tensor x2;
  std::size_t label = 0;  // class index 0..L-1
};

struct Model {
  ModelConfig cfg;
  BranchParams spatial;
  BranchParams spectral;
  IrbStack irb_aux;
  IrbStack irb_hsi;
  Tensor cls_w, cls_b;  // undefined until with_classifier()

  static Model create(const ModelConfig& cfg, std::uint64_t seed);
  void add_classifier(std::size_t num_classes, std::uint64_t seed);
  bool has_classifier() const { return cls_w.defined(); }

  /// Both encoder–decoder stacks (what pretraining updates).
  ParamList pretrain_params() const;
  /// Encoders, IRBs and classifier (what training updates).
  ParamList train_params() const;
  ParamList decoder_params() const;
  /// Every trainable tensor plus BN running statistics, by name.
  ParamList state() const;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(ParamList params, AdamConfig cfg);

  /// Bias-corrected adaptive-moment update from the current grads.
  /// Absent grads count as zero.
  void step();
  std::size_t steps() const { return t_; }
  const ParamList& params() const { return params_; }

 private:
  ParamList params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

struct LossTerms {
  Tensor total;
  Tensor spatial;
  Tensor spectral;
};

/// λ·mse over spatially masked units + mse over spectrally masked units.
LossTerms ssmae_loss(const Tensor& t, const Tensor& r_spa, const Tensor& r_spe, const MaskSpec& spa_spec,
                     const MaskSpec& spe_spec, double lambda);

struct PretrainOptions {
  double ratio_spatial = 0.5;
  double ratio_spectral = 0.5;
  double lambda = 2.0;
};

struct StepLog {
  double total = 0.0;
  double spatial = 0.0;
  double spectral = 0.0;
};

/// x1 and x2 concatenated along channels.
Tensor concat_patch(const Patch& p);

/// Reconstruction pass for one patch with given masks.
LossTerms reconstruction_loss(const Model& model, const Tensor& t, const MaskSpec& spa_spec,
                              const MaskSpec& spe_spec, double lambda);

/// One pretraining step. Patch i draws its masks from mix_seed(seed, ·, i).
StepLog pretrain_step(Model& model, Adam& opt, std::span<const Patch> batch, const PretrainOptions& opts,
                      std::uint64_t seed);

/// Mean reconstruction loss over `patches` without recording a graph; patch i
/// is masked exactly as pretrain_step would mask it under `seed`.
StepLog evaluate_reconstruction(const Model& model, std::span<const Patch> patches, const PretrainOptions& opts,
                                std::uint64_t seed);

/// Concatenated tokens [P²+C+2P² × d] of every patch. Runs the IRBs over the
/// whole batch, so BN sees batch statistics when training.
std::vector<Tensor> fused_tokens(Model& model, std::span<const Patch> batch, bool training);

Tensor classifier_logits(Model& model, std::span<const Patch> batch, bool training);

/// One finetuning step; returns the cross-entropy.
double train_step(Model& model, Adam& opt, std::span<const Patch> batch);

/// Inference-mode logits [N×L]; nothing in the model changes.
Tensor classify(const Model& model, std::span<const Patch> batch);
std::vector<std::size_t> predict(const Model& model, std::span<const Patch> batch);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);
/// Copies the encoder weights (embeddings and encoder blocks) of a pretraining checkpoint.
void load_encoders(Model& model, const std::filesystem::path& path);

}  // namespace ssmae
