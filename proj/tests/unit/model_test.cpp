#include <algorithm>
#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "ssmae/model.hpp"
#include "ssmae/ops.hpp"

using namespace ssmae;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed, bool grad = false) {
  Rng rng(seed);
  std::vector<double> v(shape_numel(s));
  for (auto& x : v) x = rng.normal();
  return Tensor(std::move(s), std::move(v), grad);
}

ModelConfig micro(std::size_t p = 3, std::size_t hsi = 4, std::size_t classes = 0) {
  ModelConfig c;
  c.transformer.blocks = 1;
  c.transformer.token_dim = 8;
  c.transformer.heads = 2;
  c.transformer.patch_size = p;
  c.transformer.channels = 1 + hsi;
  c.aux_channels = 1;
  c.hsi_channels = hsi;
  c.num_classes = classes;
  c.irb_depth = 1;
  return c;
}

std::vector<Patch> random_patches(const ModelConfig& c, std::size_t n, std::uint64_t seed) {
  std::vector<Patch> out;
  const auto p = c.transformer.patch_size;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({random_tensor({c.aux_channels, p, p}, seed + 2 * i), random_tensor({c.hsi_channels, p, p}, seed + 2 * i + 1),
                   i % std::max<std::size_t>(c.num_classes, 1)});
  }
  return out;
}

std::vector<double> snapshot(const ParamList& params) {
  std::vector<double> out;
  for (const auto& p : params) out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

MaskSpec fixed(MaskMode mode, std::size_t total, std::vector<std::size_t> masked) {
  MaskSpec s;
  s.mode = mode;
  s.total_units = total;
  s.masked = std::move(masked);
  return s;
}

}  // namespace

TEST(SsmaeLoss, PerfectReconstructionIsZero) {
  auto t = random_tensor({3, 3, 3}, 1);
  auto spa = sample_mask(MaskMode::spatial, 9, 0.5, 2);
  auto spe = sample_mask(MaskMode::spectral, 3, 0.5, 3);
  EXPECT_EQ(ssmae_loss(t, t, t, spa, spe, 2.0).total.item(), 0.0);
}

TEST(SsmaeLoss, WeightedSum) {
  // 2 bands × 2×2: spatial mask {0} -> 2 elements, spectral mask {1} -> 4 elements
  Tensor t = Tensor::full({2, 2, 2}, 0.0);
  Tensor r_spa = Tensor::full({2, 2, 2}, 0.0);
  r_spa.mutable_data()[0] = 1.0;  // band 0, pixel 0: squared errors {1, 0} -> 0.5
  Tensor r_spe = Tensor::full({2, 2, 2}, 0.0);
  r_spe.mutable_data()[4] = 1.0;  // band 1, one of 4 elements -> 0.25
  auto terms = ssmae_loss(t, r_spa, r_spe, fixed(MaskMode::spatial, 4, {0}), fixed(MaskMode::spectral, 2, {1}), 2.0);
  EXPECT_DOUBLE_EQ(terms.spatial.item(), 0.5);
  EXPECT_DOUBLE_EQ(terms.spectral.item(), 0.25);
  EXPECT_DOUBLE_EQ(terms.total.item(), 1.25);

  // visible spatial units do not count
  r_spa.mutable_data()[3] = 40.0;
  r_spa.mutable_data()[5] = -7.0;
  auto again = ssmae_loss(t, r_spa, r_spe, fixed(MaskMode::spatial, 4, {0}), fixed(MaskMode::spectral, 2, {1}), 2.0);
  EXPECT_EQ(again.total.item(), terms.total.item());
}

TEST(SsmaeLoss, EmptyMaskRejected) {
  auto t = random_tensor({3, 3, 3}, 4);
  EXPECT_ERRC(ssmae_loss(t, t, t, fixed(MaskMode::spatial, 9, {}), fixed(MaskMode::spectral, 3, {1}), 2.0),
              Errc::invalid_mask);
  EXPECT_ERRC(ssmae_loss(t, t, t, fixed(MaskMode::spatial, 9, {1}), fixed(MaskMode::spectral, 3, {}), 2.0),
              Errc::invalid_mask);
}

TEST(PretrainStep, FrozenStepsRepeat) {
  auto m = Model::create(micro(), 5);
  Adam opt(m.pretrain_params(), AdamConfig{0.0});
  auto batch = random_patches(m.cfg, 3, 6);
  PretrainOptions o{0.5, 0.5, 2.0};
  auto a = pretrain_step(m, opt, batch, o, 7);
  auto b = pretrain_step(m, opt, batch, o, 7);
  EXPECT_EQ(a.total, b.total);
  EXPECT_EQ(a.spatial, b.spatial);
}

TEST(PretrainStep, LoggedTotalIsComposition) {
  auto m = Model::create(micro(), 8);
  Adam opt(m.pretrain_params(), AdamConfig{1e-2});
  auto batch = random_patches(m.cfg, 4, 9);
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto log = pretrain_step(m, opt, batch, {0.5, 0.5, 2.0}, s);
    EXPECT_NEAR(log.total, 2.0 * log.spatial + log.spectral, 1e-12);
  }
}

TEST(PretrainStep, SinglePatchBatchAndProgress) {
  auto m = Model::create(micro(), 10);
  Adam opt(m.pretrain_params(), AdamConfig{1e-2});
  auto batch = random_patches(m.cfg, 1, 11);
  const auto first = evaluate_reconstruction(m, batch, {0.5, 0.5, 2.0}, 3).total;
  for (int i = 0; i < 60; ++i) pretrain_step(m, opt, batch, {0.5, 0.5, 2.0}, 3);
  EXPECT_LT(evaluate_reconstruction(m, batch, {0.5, 0.5, 2.0}, 3).total, 0.5 * first);
}

TEST(PretrainStep, EvaluationMatchesStepLoss) {
  auto m = Model::create(micro(), 12);
  auto batch = random_patches(m.cfg, 2, 13);
  auto ev = evaluate_reconstruction(m, batch, {0.5, 0.5, 2.0}, 14);
  Adam opt(m.pretrain_params(), AdamConfig{0.0});
  auto st = pretrain_step(m, opt, batch, {0.5, 0.5, 2.0}, 14);
  EXPECT_EQ(ev.total, st.total);
}

TEST(FusedTokens, Count) {
  auto cfg = micro(7, 33, 3);
  auto m = Model::create(cfg, 15);
  m.add_classifier(3, 16);
  auto toks = fused_tokens(m, random_patches(cfg, 2, 17), false);
  ASSERT_EQ(toks.size(), 2u);
  EXPECT_EQ(toks[0].shape(), (Shape{181, 8}));  // 49 + 34 + 2·49
}

TEST(TrainStep, FrozenParametersUnchanged) {
  auto cfg = micro(3, 4, 3);
  auto m = Model::create(cfg, 18);
  m.add_classifier(3, 19);
  Adam opt(m.train_params(), AdamConfig{0.0});
  auto before = snapshot(m.train_params());
  train_step(m, opt, random_patches(cfg, 4, 20));
  EXPECT_EQ(snapshot(m.train_params()), before);
}

TEST(TrainStep, IdenticalPatchesOverfit) {
  auto cfg = micro(3, 4, 2);
  auto m = Model::create(cfg, 21);
  m.add_classifier(2, 22);
  Adam opt(m.train_params(), AdamConfig{1e-2});
  auto one = random_patches(cfg, 1, 23)[0];
  one.label = 1;
  std::vector<Patch> batch(4, one);
  double loss = 1.0;
  for (int i = 0; i < 200 && loss >= 1e-3; ++i) loss = train_step(m, opt, batch);
  EXPECT_LT(loss, 1e-3);
}

TEST(TrainStep, DecodersUntouched) {
  auto cfg = micro(3, 4, 2);
  auto m = Model::create(cfg, 24);
  m.add_classifier(2, 25);
  auto dec = snapshot(m.decoder_params());
  Adam opt(m.train_params(), AdamConfig{1e-2});
  train_step(m, opt, random_patches(cfg, 4, 26));
  EXPECT_EQ(snapshot(m.decoder_params()), dec);
}

TEST(TrainStep, LabelOutOfRange) {
  auto cfg = micro(3, 4, 2);
  auto m = Model::create(cfg, 27);
  m.add_classifier(2, 28);
  Adam opt(m.train_params(), AdamConfig{1e-2});
  auto batch = random_patches(cfg, 2, 29);
  batch[1].label = 2;
  EXPECT_ERRC(train_step(m, opt, batch), Errc::label);
}

TEST(Classify, RepeatableAndSideEffectFree) {
  auto cfg = micro(3, 4, 3);
  auto m = Model::create(cfg, 30);
  m.add_classifier(3, 31);
  auto batch = random_patches(cfg, 5, 32);
  auto state = snapshot(m.state());
  auto a = classify(m, batch), b = classify(m, batch);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
  EXPECT_EQ(snapshot(m.state()), state);
  auto pred = predict(m, batch);
  for (std::size_t i = 0; i < 5; ++i) {
    auto row = std::vector<double>(a.data().begin() + 3 * i, a.data().begin() + 3 * i + 3);
    EXPECT_EQ(pred[i], static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
}

TEST(Classify, NeedsClassifier) {
  auto cfg = micro();
  auto m = Model::create(cfg, 33);
  EXPECT_ERRC(classify(m, random_patches(cfg, 1, 34)), Errc::contract);
}

TEST(Adam, ZeroGradientsLeaveParameters) {
  auto w = random_tensor({3}, 35, true);
  auto before = std::vector<double>(w.data().begin(), w.data().end());
  Adam opt({{"w", w}}, AdamConfig{0.1});
  sum(scale(w, 0.0)).backward();
  opt.step();
  EXPECT_EQ(std::vector<double>(w.data().begin(), w.data().end()), before);
}

TEST(Adam, FirstStep) {
  Tensor w({3}, {1.0, 1.0, 1.0}, true);
  Tensor g({3}, {0.5, -2.0, 1e-3});
  Adam opt({{"w", w}}, AdamConfig{0.01});
  sum(mul(w, g)).backward();
  opt.step();
  // -lr·m̂/(sqrt(v̂)+eps) with m̂ = g, v̂ = g², evaluated at 40 digits
  const double delta[] = {-0.009999999800000004, 0.00999999995000000025, -0.0099999000009999900001};
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(w.data()[i] - 1.0, delta[i], 1e-16);
}

TEST(Adam, GroupsIndependent) {
  auto a = random_tensor({2}, 36, true), b = random_tensor({2}, 37, true);
  auto b0 = std::vector<double>(b.data().begin(), b.data().end());
  Adam opt({{"a", a}, {"b", b}}, AdamConfig{0.1});
  sum(mul(a, a)).backward();
  opt.step();
  EXPECT_EQ(std::vector<double>(b.data().begin(), b.data().end()), b0);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  Tensor a({1}, {1.0}, true);
  Tensor b({1}, {1.0}, true);
  Adam opt({{"good", a}, {"bad", b}}, AdamConfig{0.1});
  sum(add(a, scale(b, std::nan("")))).backward();
  try {
    opt.step();
    FAIL() << "no divergence error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::divergence);
    EXPECT_NE(std::string(e.what()).find("bad"), std::string::npos);
  }
  EXPECT_EQ(a.data()[0], 1.0);  // nothing updated
}

TEST(Checkpoint, RoundTrip) {
  auto cfg = micro(3, 4, 3);
  auto m = Model::create(cfg, 38);
  m.add_classifier(3, 39);
  const auto path = std::filesystem::temp_directory_path() / "ssmae_ckpt_roundtrip.mst";
  save_checkpoint(m, path);
  auto back = load_checkpoint(path);
  EXPECT_EQ(snapshot(back.state()), snapshot(m.state()));
  auto batch = random_patches(cfg, 3, 40);
  auto a = classify(m, batch), b = classify(back, batch);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
  std::filesystem::remove(path);
}

TEST(Checkpoint, EncodersCopied) {
  auto cfg = micro(3, 4);
  auto pre = Model::create(cfg, 41);
  const auto path = std::filesystem::temp_directory_path() / "ssmae_ckpt_encoders.mst";
  save_checkpoint(pre, path);
  auto cfg2 = micro(3, 4, 2);
  auto m = Model::create(cfg2, 42);
  m.add_classifier(2, 43);
  load_encoders(m, path);
  ParamList want, got;
  pre.spatial.collect_encoder(want, "x");
  pre.spectral.collect_encoder(want, "y");
  m.spatial.collect_encoder(got, "x");
  m.spectral.collect_encoder(got, "y");
  EXPECT_EQ(snapshot(got), snapshot(want));
  std::filesystem::remove(path);
  EXPECT_ERRC(load_checkpoint(path), Errc::io);
}
