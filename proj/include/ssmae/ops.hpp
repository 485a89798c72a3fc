#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ssmae/tensor.hpp"

namespace ssmae {

// ---------------------------------------------------------------------------
// Linear algebra and shape plumbing
// ---------------------------------------------------------------------------

/// C = A·B for A[m×k], B[k×n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);  // 2-D only

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// x[..., d] + bias[d], broadcast over all leading axes.
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// x · s[index], where s is any tensor; gradient flows to that one element.
Tensor mul_element(const Tensor& x, const Tensor& s, std::size_t index);
/// x[n×in]·w[in×out] + b[out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t width);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
/// Rows of a 2-D tensor picked (possibly repeatedly) by index.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
/// x[i, ...] along the leading axis, dropping that axis.
Tensor select(const Tensor& x, std::size_t index);
/// Stacks equal-shape tensors along a new leading axis.
Tensor stack(std::span<const Tensor> parts);

// ---------------------------------------------------------------------------
// Elementwise and reductions
// ---------------------------------------------------------------------------

Tensor exp(const Tensor& x);
/// x·Φ(x) with Φ the standard normal CDF (erf form).
Tensor gelu(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Column means of a 2-D tensor: [n×d] -> [1×d].
Tensor mean_rows(const Tensor& x);

// ---------------------------------------------------------------------------
// Convolution and normalization
// ---------------------------------------------------------------------------

enum class ConvMode {
  pointwise,    // x[N×Cin×...], kernel[Cout×Cin]
  depthwise3x3, // x[N×C×H×W], kernel[C×3×3], zero same-padding
  conv3d,       // x[N×V×D×H×W], kernel[V×3×3×3], zero same-padding, one kernel per volume
};

Tensor convolve(const Tensor& x, const Tensor& kernel, ConvMode mode);

/// Per-channel running statistics. Tensors so they checkpoint like parameters.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(std::size_t channels = 0);
  std::size_t channels() const { return running_mean.defined() ? running_mean.numel() : 0; }
};

/// x[N×C×...]. Training mode normalizes by batch statistics and updates the
/// running statistics; inference mode normalizes by the running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training);

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Mean of (pred-target)^2 over entries where mask != 0.
Tensor mse_masked(const Tensor& pred, const Tensor& target, const Tensor& mask);
/// Mean over rows of -log softmax(logits)[label].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

}  // namespace ssmae
