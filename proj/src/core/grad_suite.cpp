#include <cmath>
#include <map>

#include "ssmae/grad_check.hpp"
#include "ssmae/irb.hpp"
#include "ssmae/model.hpp"
#include "ssmae/ops.hpp"

namespace ssmae {

namespace {

constexpr double kOpTol = 1e-5;
constexpr double kPathTol = 1e-4;
// Balances truncation against roundoff for losses of order one. Smaller steps
// drown gradients near 1e-6 (common in near-uniform attention) in roundoff.
constexpr double kEps = 1e-5;

Tensor random(Shape shape, Rng& rng, double scale = 1.0, bool grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor(std::move(shape), std::move(v), grad);
}

// Contracts an op output with fixed random weights, so no gradient is zero by symmetry.
class Probe {
 public:
  explicit Probe(Rng& rng) : rng_(rng) {}

  Tensor operator()(const Tensor& y) {
    auto& w = weights_[y.shape()];
    if (!w.defined()) w = random(y.shape(), rng_, 1.0, false);
    return sum(mul(y, w));
  }

 private:
  Rng& rng_;
  std::map<Shape, Tensor> weights_;
};

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : rng_(seed), probe_(rng_) {}

  void check(const std::string& name, std::vector<Tensor> inputs, const std::function<Tensor()>& f,
             double tol = kOpTol) {
    const auto report = grad_check(f, inputs, kEps);
    cases.push_back({name, report.worst(), tol, report.coordinates});
  }

  Rng& rng() { return rng_; }
  Probe& probe() { return probe_; }

  std::vector<GradCase> cases;

 private:
  Rng rng_;
  Probe probe_;
};

std::vector<Tensor> tensors_of(const ParamList& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

void op_cases(Suite& s) {
  auto& rng = s.rng();
  auto& probe = s.probe();

  {
    Tensor a = random({3, 4}, rng), b = random({4, 2}, rng);
    s.check("matmul", {a, b}, [=, &probe] { return probe(matmul(a, b)); });
    s.check("transpose", {a}, [=, &probe] { return probe(transpose(a)); });
  }
  {
    Tensor a = random({2, 3}, rng), b = random({2, 3}, rng);
    s.check("add", {a, b}, [=, &probe] { return probe(add(a, b)); });
    s.check("sub", {a, b}, [=, &probe] { return probe(sub(a, b)); });
    s.check("mul", {a, b}, [=, &probe] { return probe(mul(a, b)); });
    s.check("scale", {a}, [=, &probe] { return probe(scale(a, -1.7)); });
  }
  {
    Tensor x = random({2, 3, 4}, rng), bias = random({4}, rng), sc = random({3}, rng);
    s.check("add_bias", {x, bias}, [=, &probe] { return probe(add_bias(x, bias)); });
    s.check("mul_element", {x, sc}, [=, &probe] { return probe(mul_element(x, sc, 1)); });
  }
  {
    Tensor x = random({3, 4}, rng), w = random({4, 5}, rng), b = random({5}, rng);
    s.check("linear", {x, w, b}, [=, &probe] { return probe(linear(x, w, b)); });
    s.check("reshape", {x}, [=, &probe] { return probe(reshape(x, {2, 6})); });
    s.check("slice_cols", {x}, [=, &probe] { return probe(slice_cols(x, 1, 2)); });
    s.check("gather_rows", {x}, [=, &probe] {
      const std::size_t rows[] = {2, 0, 2, 1};
      return probe(gather_rows(x, rows));
    });
    s.check("select", {x}, [=, &probe] { return probe(select(x, 1)); });
    s.check("mean_rows", {x}, [=, &probe] { return probe(mean_rows(x)); });
    s.check("sum", {x}, [=] { return sum(mul(x, x)); });
    s.check("mean", {x}, [=] { return mean(mul(x, x)); });
  }
  {
    Tensor a = random({3, 2}, rng), b = random({3, 3}, rng), c = random({1, 3}, rng);
    s.check("concat_cols", {a, b}, [=, &probe] {
      const Tensor parts[] = {a, b};
      return probe(concat_cols(parts));
    });
    s.check("concat_rows", {b, c}, [=, &probe] {
      const Tensor parts[] = {b, c};
      return probe(concat_rows(parts));
    });
    Tensor d = random({3, 3}, rng);
    s.check("stack", {b, d}, [=, &probe] {
      const Tensor parts[] = {b, d};
      return probe(stack(parts));
    });
  }
  {
    Tensor x = random({3, 4}, rng);
    s.check("exp", {x}, [=, &probe] { return probe(exp(x)); });
    s.check("gelu", {x}, [=, &probe] { return probe(gelu(x)); });
    s.check("softmax axis 0", {x}, [=, &probe] { return probe(softmax(x, 0)); });
    s.check("softmax axis 1", {x}, [=, &probe] { return probe(softmax(x, 1)); });
  }
  {
    Tensor x = random({2, 3, 3, 3}, rng), pw = random({4, 3}, rng), dw = random({3, 3, 3}, rng);
    s.check("convolve pointwise", {x, pw}, [=, &probe] { return probe(convolve(x, pw, ConvMode::pointwise)); });
    s.check("convolve depthwise3x3", {x, dw}, [=, &probe] { return probe(convolve(x, dw, ConvMode::depthwise3x3)); });
    Tensor v = random({2, 2, 4, 3, 3}, rng), k3 = random({2, 3, 3, 3}, rng);
    s.check("convolve conv3d", {v, k3}, [=, &probe] { return probe(convolve(v, k3, ConvMode::conv3d)); });
  }
  {
    Tensor x = random({4, 3, 2, 2}, rng), gamma = random({3}, rng), beta = random({3}, rng);
    s.check("batch_norm training", {x, gamma, beta}, [=, &probe] {
      BatchNormState st(3);
      return probe(batch_norm(x, gamma, beta, st, true));
    });
    BatchNormState trained(3);
    for (auto& v : trained.running_mean.mutable_data()) v = rng.normal();
    for (auto& v : trained.running_var.mutable_data()) v = 0.5 + rng.uniform();
    s.check("batch_norm inference", {x, gamma, beta}, [=, &probe]() mutable {
      return probe(batch_norm(x, gamma, beta, trained, false));
    });
  }
  {
    Tensor pred = random({2, 3}, rng), target = random({2, 3}, rng);
    Tensor mask({2, 3}, {1, 0, 1, 0, 1, 1});
    s.check("mse_masked", {pred, target}, [=] { return mse_masked(pred, target, mask); });
    Tensor logits = random({3, 4}, rng);
    s.check("cross_entropy", {logits}, [=] {
      const std::size_t labels[] = {2, 0, 3};
      return cross_entropy(logits, labels);
    });
  }
  {
    const std::size_t d = 8, heads = 2;
    BlockParams block = BlockParams::create(d, heads, rng);
    Tensor x = random({5, d}, rng);
    ParamList p;
    block.collect(p, "block");
    auto inputs = tensors_of(p);
    inputs.push_back(x);
    s.check("attention_block", inputs, [=, &probe] { return probe(attention_block(x, block, heads)); });
  }
  {
    // Parameters are checked with BN on running statistics: under batch
    // statistics a single-channel expansion weight only moves the output
    // through BN's eps, a gradient too small for central differences.
    auto randomize_stats = [&rng](IrbParams& p) {
      for (auto* st : {&p.bn1, &p.bn2}) {
        for (auto& v : st->running_mean.mutable_data()) v = 0.3 * rng.normal();
        for (auto& v : st->running_var.mutable_data()) v = 0.5 + rng.uniform();
      }
    };
    IrbParams flat = IrbParams::create(2, false, rng);
    randomize_stats(flat);
    Tensor x = random({2, 2, 3, 3}, rng);
    ParamList p;
    flat.collect(p, "irb");
    auto inputs = tensors_of(p);
    inputs.push_back(x);
    s.check("irb2d", inputs, [=, &probe]() mutable { return probe(irb2d(x, flat, false)); });
    s.check("irb2d batch statistics", {x}, [=, &probe]() mutable { return probe(irb2d(x, flat, true)); });

    IrbParams vol = IrbParams::create(4, true, rng);
    randomize_stats(vol);
    Tensor y = random({2, 4, 3, 3}, rng);
    ParamList q;
    vol.collect(q, "irb");
    auto inputs3 = tensors_of(q);
    inputs3.push_back(y);
    s.check("irb3d", inputs3, [=, &probe]() mutable { return probe(irb3d(y, vol, false)); });
    s.check("irb3d batch statistics", {y}, [=, &probe]() mutable { return probe(irb3d(y, vol, true)); });

    IrbStack st = IrbStack::create(4, true, 1, 8, rng);
    Tensor z = random({4, 3, 3}, rng);
    s.check("irb_tokens", {z, st.token_w, st.token_b}, [=, &probe] { return probe(irb_tokens(z, st).tokens); });
  }
}

ModelConfig micro_config() {
  ModelConfig cfg;
  cfg.transformer.blocks = 1;
  cfg.transformer.token_dim = 8;
  cfg.transformer.heads = 2;
  cfg.transformer.patch_size = 3;
  cfg.transformer.channels = 5;
  cfg.aux_channels = 1;
  cfg.hsi_channels = 4;
  cfg.num_classes = 3;
  // One IRB per stack: deeper stacks repeat a block checked above and push
  // the gradients of early blocks under the difference noise floor.
  cfg.irb_depth = 1;
  return cfg;
}

void path_cases(Suite& s) {
  auto& rng = s.rng();
  const auto cfg = micro_config();
  Model model = Model::create(cfg, rng.next());
  const auto& tf = cfg.transformer;
  Tensor t = random({5, 3, 3}, rng, 1.0, false);
  const auto spa = sample_mask(MaskMode::spatial, 9, 0.5, rng.next());
  const auto spe = sample_mask(MaskMode::spectral, 5, 0.5, rng.next(), cfg.protected_bands());

  auto branch_case = [&](const char* name, BranchParams& branch, const MaskSpec& spec) {
    ParamList p;
    branch.collect_encoder(p, "enc");
    branch.collect_decoder(p, "dec");
    const auto mask = element_mask(spec, t.shape());
    s.check(name, tensors_of(p), [&, mask] {
      const auto masked = apply_mask(t, spec);
      const auto enc = encode(tokenize(masked, branch), branch, tf);
      return mse_masked(decode(enc, spec, branch, tf), t, mask);
    }, kPathTol);
  };
  branch_case("spatial encode-decode", model.spatial, spa);
  branch_case("spectral encode-decode", model.spectral, spe);

  s.check("pretraining loss", tensors_of(model.pretrain_params()), [&] {
    return reconstruction_loss(model, t, spa, spe, 2.0).total;
  }, kPathTol);

  std::vector<Patch> batch;
  for (std::size_t i = 0; i < 3; ++i) {
    batch.push_back({random({1, 3, 3}, rng, 1.0, false), random({4, 3, 3}, rng, 1.0, false), i});
  }
  // Fused tokens of the classification path, BN on running statistics as in
  // the IRB op cases. Pooling and the head are covered op by op; chained on
  // top they shrink IRB gradients below what differences can resolve.
  auto& probe = s.probe();
  ParamList train = model.train_params();
  train.pop_back();
  train.pop_back();
  s.check("fused tokens", tensors_of(train), [&] {
    const auto tokens = fused_tokens(model, batch, false);
    return probe(concat_rows(tokens));
  }, kPathTol);
}

}  // namespace

std::vector<GradCase> run_grad_suite(std::uint64_t seed) {
  Suite s(seed);
  op_cases(s);
  path_cases(s);
  return s.cases;
}

}  // namespace ssmae
