#pragma once

#include <string>
#include <vector>

#include "ssmae/masking.hpp"
#include "ssmae/params.hpp"
#include "ssmae/rng.hpp"
#include "ssmae/tensor.hpp"

namespace ssmae {

struct TransformerConfig {
  std::size_t blocks = 2;       // per encoder and per decoder
  std::size_t token_dim = 256;
  std::size_t heads = 8;
  std::size_t patch_size = 7;
  std::size_t channels = 0;     // C1 + C2

  void validate() const;
};

enum class TokenOrigin { pixel, band, irb };

/// Tokens as rows: tokens[n_tokens × d]; unit_ids[i] is the pixel or band
/// index the i-th token came from (pixel index for IRB tokens).
struct TokenBatch {
  Tensor tokens;
  TokenOrigin origin = TokenOrigin::pixel;
  std::vector<std::size_t> unit_ids;

  std::size_t size() const { return unit_ids.size(); }
};

enum class PosKind { grid2d, line1d };

/// Fixed sin-cos table [total_units × d]. grid2d uses the first d/2 columns
/// for the row coordinate and the rest for the column coordinate of a
/// square P×P grid; line1d encodes the unit index directly.
Tensor positional_embedding(PosKind kind, std::size_t total_units, std::size_t d);

struct BlockParams {
  Tensor wq, bq, wk, wv, bv;  // per-token d→d maps; a key bias would only shift each softmax row
  Tensor alpha_log;               // [H], temperature α_h = exp(alpha_log[h])
  Tensor ffn_in_w, ffn_in_b;      // d→4d
  Tensor ffn_out_w, ffn_out_b;    // 4d→d

  static BlockParams create(std::size_t d, std::size_t heads, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;
};

/// Parameters of one encoder–decoder stack. The spatial branch tokenizes
/// pixels (raw dim C1+C2), the spectral branch tokenizes bands (raw dim P·P).
struct BranchParams {
  MaskMode kind = MaskMode::spatial;
  std::size_t raw_dim = 0;
  std::size_t total_units = 0;
  Tensor embed_w, embed_b;  // raw→d
  Tensor pos_table;         // fixed, not trained
  std::vector<BlockParams> encoder;
  std::vector<BlockParams> decoder;
  Tensor mask_token;        // [1×d]
  Tensor out_w, out_b;      // d→raw

  static BranchParams create(MaskMode kind, const TransformerConfig& cfg, Rng& rng);
  void collect_encoder(ParamList& out, const std::string& prefix) const;
  void collect_decoder(ParamList& out, const std::string& prefix) const;
};

/// Per-head attention maps of one block application, [n_query × n_key] each;
/// row j holds the weights combining value tokens into output token j.
struct AttentionTrace {
  std::vector<Tensor> weights;
};

TokenBatch tokenize_spatial(const MaskedTensor& masked, const BranchParams& params);
TokenBatch tokenize_spectral(const MaskedTensor& masked, const BranchParams& params);
TokenBatch tokenize(const MaskedTensor& masked, const BranchParams& params);

/// X + Attention(X), then + FFN. Heads split the feature axis into H slices.
Tensor attention_block(const Tensor& x, const BlockParams& params, std::size_t heads,
                       AttentionTrace* trace = nullptr);

TokenBatch encode(const TokenBatch& visible, const BranchParams& params, const TransformerConfig& cfg);

/// Mask tokens in at masked units, positional table over all units, the
/// decoder blocks, the per-token output head, and reassembly into a
/// (C1+C2)×P×P reconstruction.
Tensor decode(const TokenBatch& encoded, const MaskSpec& spec, const BranchParams& params,
              const TransformerConfig& cfg);

}  // namespace ssmae
