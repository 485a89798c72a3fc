#pragma once

#include <cstdint>
#include <string>

#include "ssmae/data.hpp"
#include "ssmae/model.hpp"

namespace ssmae {

struct RunConfig {
  std::size_t patch_size = 7;
  std::size_t pca_components = 30;
  std::size_t token_dim = 256;
  std::size_t blocks = 2;
  std::size_t heads = 8;
  std::size_t irb_depth = 3;
  double lambda = 2.0;
  double ratio_spatial = 0.5;
  double ratio_spectral = 0.5;

  std::size_t pretrain_samples = 4096;  // A, pixel locations drawn for pretraining
  std::size_t batch_size = 32;
  std::size_t pretrain_steps = 200;
  std::size_t train_steps = 300;
  double lr_pretrain = 1e-3;
  double lr_train = 5e-4;
  double train_per_class = 20;  // count, or a fraction in (0, 1)
  std::string pca_scaling = "shared";  // shared | per_channel | none
  std::size_t pca_sample_cap = 0;      // 0 = fit on every labeled pixel

  std::uint64_t seed = 0;
  SceneConfig scene;
  std::string out_dir = ".";

  /// Throws a config error naming the offending field.
  void validate() const;
  ModelConfig model_config() const;
  Standardize scaling() const;

  /// Flat JSON object; unknown keys are config errors.
  static RunConfig from_json(const std::string& text);
  static RunConfig from_file(const std::string& path);
  std::string to_json() const;
  /// Override one field from its textual value, as flags do.
  void set(const std::string& key, const std::string& value);
};

}  // namespace ssmae
