#include "ssmae/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"
#include "ssmae/error.hpp"

namespace ssmae {

namespace {

using json = nlohmann::json;

struct Field {
  std::function<void(RunConfig&, const json&)> read;
  std::function<json(const RunConfig&)> write;
};

template <typename T>
Field field(T RunConfig::*member) {
  return {[member](RunConfig& c, const json& v) { c.*member = v.get<T>(); },
          [member](const RunConfig& c) { return json(c.*member); }};
}

template <typename T>
Field scene_field(T SceneConfig::*member) {
  return {[member](RunConfig& c, const json& v) { c.scene.*member = v.get<T>(); },
          [member](const RunConfig& c) { return json(c.scene.*member); }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"patch_size", field(&RunConfig::patch_size)},
      {"pca_components", field(&RunConfig::pca_components)},
      {"token_dim", field(&RunConfig::token_dim)},
      {"blocks", field(&RunConfig::blocks)},
      {"heads", field(&RunConfig::heads)},
      {"irb_depth", field(&RunConfig::irb_depth)},
      {"lambda", field(&RunConfig::lambda)},
      {"ratio_spatial", field(&RunConfig::ratio_spatial)},
      {"ratio_spectral", field(&RunConfig::ratio_spectral)},
      {"pretrain_samples", field(&RunConfig::pretrain_samples)},
      {"batch_size", field(&RunConfig::batch_size)},
      {"pretrain_steps", field(&RunConfig::pretrain_steps)},
      {"train_steps", field(&RunConfig::train_steps)},
      {"lr_pretrain", field(&RunConfig::lr_pretrain)},
      {"lr_train", field(&RunConfig::lr_train)},
      {"train_per_class", field(&RunConfig::train_per_class)},
      {"pca_scaling", field(&RunConfig::pca_scaling)},
      {"pca_sample_cap", field(&RunConfig::pca_sample_cap)},
      {"seed", field(&RunConfig::seed)},
      {"out_dir", field(&RunConfig::out_dir)},
      {"height", scene_field(&SceneConfig::height)},
      {"width", scene_field(&SceneConfig::width)},
      {"classes", scene_field(&SceneConfig::classes)},
      {"hsi_bands", scene_field(&SceneConfig::hsi_bands)},
      {"aux_channels", scene_field(&SceneConfig::aux_channels)},
      {"noise", scene_field(&SceneConfig::noise)},
      {"region_scale", scene_field(&SceneConfig::region_scale)},
  };
  return table;
}

void apply(RunConfig& cfg, const std::string& key, const json& value) {
  const auto& table = fields();
  auto it = table.find(key);
  if (it == table.end()) fail(Errc::config, "unknown config field '" + key + "'");
  const json current = it->second.write(cfg);
  if (current.is_number_unsigned() && !(value.is_number_unsigned() || (value.is_number_integer() && value.get<long long>() >= 0))) {
    fail(Errc::config, key + ": expected a nonnegative integer, got " + value.dump());
  }
  if (current.is_number_float() && !value.is_number()) fail(Errc::config, key + ": expected a number, got " + value.dump());
  if (current.is_string() && !value.is_string()) fail(Errc::config, key + ": expected a string, got " + value.dump());
  try {
    it->second.read(cfg, value);
  } catch (const json::exception&) {
    fail(Errc::config, key + ": wrong value type " + value.dump());
  }
}

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) fail(Errc::config, field + ": " + why);
}

}  // namespace

void RunConfig::validate() const {
  require(patch_size > 0 && patch_size % 2 == 1, "patch_size", "must be odd, got " + std::to_string(patch_size));
  require(token_dim > 0 && token_dim % 4 == 0, "token_dim", "must be a positive multiple of 4");
  require(heads > 0 && token_dim % heads == 0, "heads",
          "token_dim " + std::to_string(token_dim) + " is not divisible by " + std::to_string(heads));
  require(irb_depth > 0, "irb_depth", "must be positive");
  require(lambda >= 0.0, "lambda", "must be nonnegative");
  require(ratio_spatial > 0.0 && ratio_spatial < 1.0, "ratio_spatial", "must lie in (0, 1)");
  require(ratio_spectral > 0.0 && ratio_spectral < 1.0, "ratio_spectral", "must lie in (0, 1)");
  require(batch_size > 0, "batch_size", "must be positive");
  require(lr_pretrain >= 0.0, "lr_pretrain", "must be nonnegative");
  require(lr_train >= 0.0, "lr_train", "must be nonnegative");
  require(train_per_class >= 0.0, "train_per_class", "must be nonnegative");
  require(pca_scaling == "shared" || pca_scaling == "per_channel" || pca_scaling == "none", "pca_scaling",
          "must be shared, per_channel or none");
  require(scene.classes >= 2, "classes", "must be at least 2");
  require(scene.height > 0 && scene.width > 0, "height", "scene extents must be positive");
  require(scene.height * scene.width >= scene.classes, "height", "scene too small for the class count");
  require(scene.aux_channels > 0, "aux_channels", "must be positive");
  require(pca_components > 0 && pca_components <= scene.hsi_bands, "pca_components",
          "must lie in [1, hsi_bands=" + std::to_string(scene.hsi_bands) + "]");
  require(scene.noise >= 0.0, "noise", "must be nonnegative");
  require(scene.region_scale >= 0.0, "region_scale", "must be nonnegative");
  require(pretrain_samples > 0 && pretrain_samples <= scene.height * scene.width, "pretrain_samples",
          "must lie in [1, height*width]");
  // Spectral masks need at least one eligible band and one masked band.
  const std::size_t eligible = pca_components + (scene.aux_channels == 1 ? 0 : scene.aux_channels);
  require(masked_unit_count(eligible, ratio_spectral) > 0, "ratio_spectral", "masks no band");
  require(masked_unit_count(patch_size * patch_size, ratio_spatial) > 0, "ratio_spatial", "masks no pixel");
  require(!out_dir.empty(), "out_dir", "must not be empty");
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.transformer.blocks = blocks;
  m.transformer.token_dim = token_dim;
  m.transformer.heads = heads;
  m.transformer.patch_size = patch_size;
  m.transformer.channels = scene.aux_channels + pca_components;
  m.aux_channels = scene.aux_channels;
  m.hsi_channels = pca_components;
  m.irb_depth = irb_depth;
  return m;
}

Standardize RunConfig::scaling() const {
  if (pca_scaling == "per_channel") return Standardize::per_channel;
  if (pca_scaling == "none") return Standardize::none;
  return Standardize::shared;
}

RunConfig RunConfig::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(Errc::config, std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(Errc::config, "config must be a flat JSON object");
  RunConfig cfg;
  for (const auto& [key, value] : doc.items()) apply(cfg, key, value);
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::string RunConfig::to_json() const {
  json doc = json::object();
  for (const auto& [key, f] : fields()) doc[key] = f.write(*this);
  return doc.dump(2);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& table = fields();
  auto it = table.find(key);
  if (it == table.end()) fail(Errc::config, "unknown config field '" + key + "'");
  json current = it->second.write(*this);
  json parsed;
  if (current.is_string()) {
    parsed = value;
  } else {
    try {
      parsed = json::parse(value);
    } catch (const json::parse_error&) {
      fail(Errc::config, key + ": cannot parse '" + value + "'");
    }
  }
  apply(*this, key, parsed);
}

}  // namespace ssmae
