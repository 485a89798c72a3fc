#pragma once

#include <string>
#include <vector>

#include "ssmae/attention.hpp"
#include "ssmae/ops.hpp"
#include "ssmae/params.hpp"

namespace ssmae {

/// One inverted residual block, expansion ratio 2:
///   pointwise expand -> BN -> GELU -> (core conv + identity) -> BN -> GELU -> pointwise project.
/// The 2-D variant expands c channels to 2c and uses depthwise 3×3 kernels.
/// The 3-D variant treats the c×P×P input as one band×row×col volume,
/// expands it to 2 volumes and uses a 3×3×3 kernel per volume.
struct IrbParams {
  bool volumetric = false;
  std::size_t channels = 0;  // c of the c×P×P input
  Tensor expand_w;           // [2c×c] or [2×1]
  Tensor bn1_gamma, bn1_beta;
  BatchNormState bn1;
  Tensor core;               // [2c×3×3] or [2×3×3×3]
  Tensor bn2_gamma, bn2_beta;
  BatchNormState bn2;
  Tensor project_w;          // [c×2c] or [1×2]

  static IrbParams create(std::size_t channels, bool volumetric, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;
  void collect_buffers(ParamList& out, const std::string& prefix) const;
};

/// x[N×c×P×P] -> [N×c×P×P].
Tensor irb2d(const Tensor& x, IrbParams& params, bool training);
Tensor irb3d(const Tensor& x, IrbParams& params, bool training);

/// Sequential IRBs followed by the per-pixel token projection c -> d.
struct IrbStack {
  std::vector<IrbParams> blocks;
  Tensor token_w, token_b;

  static IrbStack create(std::size_t channels, bool volumetric, std::size_t depth, std::size_t d, Rng& rng);
  void collect(ParamList& out, const std::string& prefix) const;
  void collect_buffers(ParamList& out, const std::string& prefix) const;
};

Tensor run_irb_stack(const Tensor& x, IrbStack& stack, bool training);

/// Per-pixel projection of one sample y[c×P×P] to P·P tokens of origin irb.
TokenBatch irb_tokens(const Tensor& y, const IrbStack& stack);

}  // namespace ssmae
