#include "helpers.hpp"
#include "ssmae/config.hpp"

using namespace ssmae;

namespace {

void expect_config_error(const std::string& json, const std::string& field) {
  try {
    RunConfig::from_json(json).validate();
    ADD_FAILURE() << "accepted " << json;
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::config);
    EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
  }
}

}  // namespace

TEST(Config, Defaults) {
  RunConfig c;
  EXPECT_EQ(c.patch_size, 7u);
  EXPECT_EQ(c.token_dim, 256u);
  EXPECT_EQ(c.blocks, 2u);
  EXPECT_EQ(c.heads, 8u);
  EXPECT_EQ(c.lambda, 2.0);
  EXPECT_NO_THROW(c.validate());
  auto m = c.model_config();
  EXPECT_EQ(m.transformer.channels, 1u + 30u);
  EXPECT_EQ(m.num_classes, 0u);  // classifier is added for training
}

TEST(Config, JsonRoundTrip) {
  auto c = RunConfig::from_json(R"({"seed": 9, "token_dim": 32, "heads": 4, "classes": 3, "lr_train": 0.01})");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.scene.classes, 3u);
  auto back = RunConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.lr_train, 0.01);
}

TEST(Config, Violations) {
  expect_config_error(R"({"token_dim": 30, "heads": 4})", "token_dim");
  expect_config_error(R"({"ratio_spatial": 1.5})", "ratio_spatial");
  expect_config_error(R"({"patch_size": 4})", "patch_size");
  expect_config_error(R"({"bogus": 1})", "bogus");
  expect_config_error(R"({"seed": -1})", "seed");
  expect_config_error(R"({"lr_train": "fast"})", "lr_train");
  expect_config_error(R"({"pca_scaling": "log"})", "pca_scaling");
  expect_config_error(R"({"pca_components": 100})", "pca_components");
  expect_config_error("[1, 2]", "");
  expect_config_error("{", "");
}

TEST(Config, FlagOverrides) {
  RunConfig c;
  c.set("seed", "12");
  c.set("ratio_spectral", "0.7");
  c.set("out_dir", "/tmp/x");
  EXPECT_EQ(c.seed, 12u);
  EXPECT_EQ(c.ratio_spectral, 0.7);
  EXPECT_EQ(c.out_dir, "/tmp/x");
  EXPECT_ERRC(c.set("seed", "x"), Errc::config);
  EXPECT_ERRC(c.set("nope", "1"), Errc::config);
}

TEST(Config, MissingFile) { EXPECT_ERRC(RunConfig::from_file("/nonexistent/ssmae.json"), Errc::io); }
