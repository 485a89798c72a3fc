#include "ssmae/attention.hpp"

#include <cmath>

#include "ssmae/error.hpp"
#include "ssmae/ops.hpp"

namespace ssmae {

void TransformerConfig::validate() const {
  if (token_dim == 0 || heads == 0 || token_dim % heads != 0) {
    fail(Errc::config, "token_dim " + std::to_string(token_dim) + " must be a positive multiple of heads " +
                           std::to_string(heads));
  }
  if (token_dim % 4 != 0) {
    fail(Errc::config, "token_dim " + std::to_string(token_dim) + " must be divisible by 4 (2-D positional table)");
  }
  if (patch_size == 0 || patch_size % 2 == 0) {
    fail(Errc::config, "patch_size " + std::to_string(patch_size) + " must be odd");
  }
  if (channels == 0) fail(Errc::config, "channels must be positive");
}

Tensor positional_embedding(PosKind kind, std::size_t total_units, std::size_t d) {
  if (d == 0 || d % 2 != 0) fail(Errc::parameter, "positional_embedding: d must be even, got " + std::to_string(d));

  auto sincos = [](double pos, std::size_t width, double* row) {
    const std::size_t half = width / 2;
    for (std::size_t i = 0; i < half; ++i) {
      const double omega = 1.0 / std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(width));
      row[i] = std::sin(pos * omega);
      row[half + i] = std::cos(pos * omega);
    }
  };

  std::vector<double> table(total_units * d);
  if (kind == PosKind::line1d) {
    for (std::size_t u = 0; u < total_units; ++u) sincos(static_cast<double>(u), d, table.data() + u * d);
  } else {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(total_units))));
    if (side * side != total_units) {
      fail(Errc::parameter, "positional_embedding: grid2d needs a square unit count, got " + std::to_string(total_units));
    }
    if (d % 4 != 0) fail(Errc::parameter, "positional_embedding: grid2d needs d divisible by 4");
    for (std::size_t u = 0; u < total_units; ++u) {
      sincos(static_cast<double>(u / side), d / 2, table.data() + u * d);
      sincos(static_cast<double>(u % side), d / 2, table.data() + u * d + d / 2);
    }
  }
  return Tensor({total_units, d}, std::move(table));
}

BlockParams BlockParams::create(std::size_t d, std::size_t heads, Rng& rng) {
  BlockParams b;
  b.wq = init_uniform({d, d}, d, rng);
  b.bq = init_zeros({d});
  b.wk = init_uniform({d, d}, d, rng);
  b.wv = init_uniform({d, d}, d, rng);
  b.bv = init_zeros({d});
  const double alpha0 = std::log(std::sqrt(static_cast<double>(d) / static_cast<double>(heads)));
  b.alpha_log = Tensor::full({heads}, alpha0, true);
  b.ffn_in_w = init_uniform({d, 4 * d}, d, rng);
  b.ffn_in_b = init_zeros({4 * d});
  b.ffn_out_w = init_uniform({4 * d, d}, 4 * d, rng);
  b.ffn_out_b = init_zeros({d});
  return b;
}

void BlockParams::collect(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".wq", wq});
  out.push_back({prefix + ".bq", bq});
  out.push_back({prefix + ".wk", wk});
  out.push_back({prefix + ".wv", wv});
  out.push_back({prefix + ".bv", bv});
  out.push_back({prefix + ".alpha_log", alpha_log});
  out.push_back({prefix + ".ffn_in_w", ffn_in_w});
  out.push_back({prefix + ".ffn_in_b", ffn_in_b});
  out.push_back({prefix + ".ffn_out_w", ffn_out_w});
  out.push_back({prefix + ".ffn_out_b", ffn_out_b});
}

BranchParams BranchParams::create(MaskMode kind, const TransformerConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto d = cfg.token_dim;
  const auto pixels = cfg.patch_size * cfg.patch_size;
  BranchParams p;
  p.kind = kind;
  p.raw_dim = kind == MaskMode::spatial ? cfg.channels : pixels;
  p.total_units = kind == MaskMode::spatial ? pixels : cfg.channels;
  p.pos_table = positional_embedding(kind == MaskMode::spatial ? PosKind::grid2d : PosKind::line1d,
                                     p.total_units, d);
  p.embed_w = init_uniform({p.raw_dim, d}, p.raw_dim, rng);
  p.embed_b = init_zeros({d});
  for (std::size_t i = 0; i < cfg.blocks; ++i) p.encoder.push_back(BlockParams::create(d, cfg.heads, rng));
  for (std::size_t i = 0; i < cfg.blocks; ++i) p.decoder.push_back(BlockParams::create(d, cfg.heads, rng));
  p.mask_token = init_normal({1, d}, 0.02, rng);
  p.out_w = init_uniform({d, p.raw_dim}, d, rng);
  p.out_b = init_zeros({p.raw_dim});
  return p;
}

void BranchParams::collect_encoder(ParamList& out, const std::string& prefix) const {
  out.push_back({prefix + ".embed_w", embed_w});
  out.push_back({prefix + ".embed_b", embed_b});
  for (std::size_t i = 0; i < encoder.size(); ++i) encoder[i].collect(out, prefix + ".enc" + std::to_string(i));
}

void BranchParams::collect_decoder(ParamList& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < decoder.size(); ++i) decoder[i].collect(out, prefix + ".dec" + std::to_string(i));
  out.push_back({prefix + ".mask_token", mask_token});
  out.push_back({prefix + ".out_w", out_w});
  out.push_back({prefix + ".out_b", out_b});
}

namespace {

TokenBatch embed_visible(const MaskedTensor& masked, const BranchParams& params, TokenOrigin origin) {
  if (masked.visible.dim(1) != params.raw_dim || masked.spec.total_units != params.total_units) {
    fail(Errc::contract, "tokenize: masked tensor " + shape_str(masked.original_shape) +
                             " does not match branch with raw dim " + std::to_string(params.raw_dim));
  }
  TokenBatch out;
  out.origin = origin;
  out.unit_ids = masked.spec.visible();
  Tensor embedded = linear(masked.visible, params.embed_w, params.embed_b);
  out.tokens = add(embedded, gather_rows(params.pos_table, out.unit_ids));
  return out;
}

}  // namespace

TokenBatch tokenize_spatial(const MaskedTensor& masked, const BranchParams& params) {
  if (masked.spec.mode != MaskMode::spatial || params.kind != MaskMode::spatial) {
    fail(Errc::contract, "tokenize_spatial: requires a spatial mask and the spatial branch");
  }
  return embed_visible(masked, params, TokenOrigin::pixel);
}

TokenBatch tokenize_spectral(const MaskedTensor& masked, const BranchParams& params) {
  if (masked.spec.mode != MaskMode::spectral || params.kind != MaskMode::spectral) {
    fail(Errc::contract, "tokenize_spectral: requires a spectral mask and the spectral branch");
  }
  return embed_visible(masked, params, TokenOrigin::band);
}

TokenBatch tokenize(const MaskedTensor& masked, const BranchParams& params) {
  return masked.spec.mode == MaskMode::spatial ? tokenize_spatial(masked, params)
                                               : tokenize_spectral(masked, params);
}

Tensor attention_block(const Tensor& x, const BlockParams& p, std::size_t heads, AttentionTrace* trace) {
  const auto d = x.dim(1);
  if (heads == 0 || d % heads != 0) {
    fail(Errc::dimension, "attention_block: token dim " + std::to_string(d) + " not divisible by " +
                              std::to_string(heads) + " heads");
  }
  const auto width = d / heads;
  Tensor q = linear(x, p.wq, p.bq);
  Tensor k = matmul(x, p.wk);
  Tensor v = linear(x, p.wv, p.bv);
  Tensor inv_alpha = exp(scale(p.alpha_log, -1.0));

  std::vector<Tensor> head_out;
  head_out.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * width, width);
    Tensor kh = slice_cols(k, h * width, width);
    Tensor vh = slice_cols(v, h * width, width);
    // logits[j, i] = q_j · k_i / α_h; each row normalizes over the value tokens.
    Tensor logits = mul_element(matmul(qh, transpose(kh)), inv_alpha, h);
    Tensor weights = softmax(logits, 1);
    if (trace) trace->weights.push_back(weights);
    head_out.push_back(matmul(weights, vh));
  }
  Tensor attended = add(x, concat_cols(head_out));
  Tensor hidden = gelu(linear(attended, p.ffn_in_w, p.ffn_in_b));
  return add(attended, linear(hidden, p.ffn_out_w, p.ffn_out_b));
}

TokenBatch encode(const TokenBatch& visible, const BranchParams& params, const TransformerConfig& cfg) {
  TokenBatch out = visible;
  for (const auto& block : params.encoder) out.tokens = attention_block(out.tokens, block, cfg.heads);
  return out;
}

Tensor decode(const TokenBatch& encoded, const MaskSpec& spec, const BranchParams& params,
              const TransformerConfig& cfg) {
  if (spec.total_units != params.total_units || encoded.unit_ids != spec.visible()) {
    fail(Errc::contract, "decode: encoded unit ids do not match the visible units of the mask");
  }
  const auto n_visible = encoded.size();
  std::vector<std::size_t> order(spec.total_units, n_visible);
  for (std::size_t i = 0; i < n_visible; ++i) order[encoded.unit_ids[i]] = i;

  const Tensor pool[] = {encoded.tokens, params.mask_token};
  Tensor full = add(gather_rows(concat_rows(pool), order), params.pos_table);
  for (const auto& block : params.decoder) full = attention_block(full, block, cfg.heads);
  Tensor out = linear(full, params.out_w, params.out_b);  // [units × raw]

  const auto p = cfg.patch_size;
  if (params.kind == MaskMode::spatial) return reshape(transpose(out), {cfg.channels, p, p});
  return reshape(out, {cfg.channels, p, p});
}

}  // namespace ssmae
