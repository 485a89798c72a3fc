#include "ssmae/irb.hpp"

#include "ssmae/error.hpp"

namespace ssmae {

IrbParams IrbParams::create(std::size_t channels, bool volumetric, Rng& rng) {
  IrbParams p;
  p.volumetric = volumetric;
  p.channels = channels;
  const std::size_t in = volumetric ? 1 : channels;
  const std::size_t hidden = 2 * in;
  p.expand_w = init_uniform({hidden, in}, in, rng);
  p.bn1_gamma = Tensor::full({hidden}, 1.0, true);
  p.bn1_beta = init_zeros({hidden});
  p.bn1 = BatchNormState(hidden);
  p.core = volumetric ? init_uniform({hidden, 3, 3, 3}, 27, rng) : init_uniform({hidden, 3, 3}, 9, rng);
  p.bn2_gamma = Tensor::full({hidden}, 1.0, true);
  p.bn2_beta = init_zeros({hidden});
  p.bn2 = BatchNormState(hidden);
  p.project_w = init_uniform({in, hidden}, hidden, rng);
  return p;
}

void IrbParams::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".expand_w", expand_w});
  out.push_back({prefix + ".bn1_gamma", bn1_gamma});
  out.push_back({prefix + ".bn1_beta", bn1_beta});
  out.push_back({prefix + ".core", core});
  out.push_back({prefix + ".bn2_gamma", bn2_gamma});
  out.push_back({prefix + ".bn2_beta", bn2_beta});
  out.push_back({prefix + ".project_w", project_w});
}

void IrbParams::collect_buffers(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".bn1_mean", bn1.running_mean});
  out.push_back({prefix + ".bn1_var", bn1.running_var});
  out.push_back({prefix + ".bn2_mean", bn2.running_mean});
  out.push_back({prefix + ".bn2_var", bn2.running_var});
}

namespace {

Tensor irb_body(const Tensor& x, IrbParams& p, bool training) {
  const ConvMode core_mode = p.volumetric ? ConvMode::conv3d : ConvMode::depthwise3x3;
  Tensor h = convolve(x, p.expand_w, ConvMode::pointwise);
  h = gelu(batch_norm(h, p.bn1_gamma, p.bn1_beta, p.bn1, training));
  h = add(convolve(h, p.core, core_mode), h);
  h = gelu(batch_norm(h, p.bn2_gamma, p.bn2_beta, p.bn2, training));
  return convolve(h, p.project_w, ConvMode::pointwise);
}

void require_patch_batch(const Tensor& x, const IrbParams& p, const char* op) {
  if (x.rank() != 4 || x.dim(1) != p.channels || x.dim(2) != x.dim(3)) {
    fail(Errc::dimension, std::string(op) + ": expected N×" + std::to_string(p.channels) + "×P×P, got " +
                              shape_str(x.shape()));
  }
}

}  // namespace

Tensor irb2d(const Tensor& x, IrbParams& params, bool training) {
  if (params.volumetric) fail(Errc::contract, "irb2d: given 3-D block parameters");
  require_patch_batch(x, params, "irb2d");
  return irb_body(x, params, training);
}

Tensor irb3d(const Tensor& x, IrbParams& params, bool training) {
  if (!params.volumetric) fail(Errc::contract, "irb3d: given 2-D block parameters");
  require_patch_batch(x, params, "irb3d");
  const auto& s = x.shape();
  Tensor volume = reshape(x, {s[0], 1, s[1], s[2], s[3]});
  return reshape(irb_body(volume, params, training), s);
}

IrbStack IrbStack::create(std::size_t channels, bool volumetric, std::size_t depth, std::size_t d, Rng& rng) {
  IrbStack s;
  for (std::size_t i = 0; i < depth; ++i) s.blocks.push_back(IrbParams::create(channels, volumetric, rng));
  s.token_w = init_uniform({channels, d}, channels, rng);
  s.token_b = init_zeros({d});
  return s;
}

void IrbStack::collect(ParamList& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(out, prefix + ".irb" + std::to_string(i));
  out.push_back({prefix + ".token_w", token_w});
  out.push_back({prefix + ".token_b", token_b});
}

void IrbStack::collect_buffers(ParamList& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect_buffers(out, prefix + ".irb" + std::to_string(i));
}

Tensor run_irb_stack(const Tensor& x, IrbStack& stack, bool training) {
  Tensor h = x;
  for (auto& block : stack.blocks) h = block.volumetric ? irb3d(h, block, training) : irb2d(h, block, training);
  return h;
}

TokenBatch irb_tokens(const Tensor& y, const IrbStack& stack) {
  if (y.rank() != 3 || y.dim(0) != stack.token_w.dim(0)) {
    fail(Errc::dimension, "irb_tokens: expected c×P×P with c=" + std::to_string(stack.token_w.dim(0)) + ", got " +
                              shape_str(y.shape()));
  }
  const auto c = y.dim(0), pixels = y.dim(1) * y.dim(2);
  TokenBatch out;
  out.origin = TokenOrigin::irb;
  out.unit_ids.resize(pixels);
  for (std::size_t i = 0; i < pixels; ++i) out.unit_ids[i] = i;
  out.tokens = linear(transpose(reshape(y, {c, pixels})), stack.token_w, stack.token_b);
  return out;
}

}  // namespace ssmae
