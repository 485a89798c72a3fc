#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ssmae/tensor.hpp"

namespace ssmae {

/// Spatial units are pixel columns ((C1+C2)×1×1, P·P of them); spectral
/// units are whole bands (1×P×P, C1+C2 of them).
enum class MaskMode { spatial, spectral };

struct MaskSpec {
  MaskMode mode = MaskMode::spatial;
  std::size_t total_units = 0;
  std::vector<std::size_t> masked;           // sorted, unique
  std::vector<std::size_t> protected_units;  // sorted, never masked
  std::uint64_t seed = 0;

  bool is_masked(std::size_t unit) const;
  /// Complement of `masked`, ascending.
  std::vector<std::size_t> visible() const;
};

/// round(ratio · eligible), halves rounded up. Decimal ratios such as 0.7
/// are not exact in binary, so products within 1e-9 of a half count as halves.
std::size_t masked_unit_count(std::size_t eligible, double ratio);

/// Seeded uniform draw without replacement of masked_unit_count(total -
/// |protected|, ratio) units from the unprotected set.
MaskSpec sample_mask(MaskMode mode, std::size_t total_units, double ratio, std::uint64_t seed,
                     std::span<const std::size_t> protected_units = {});

struct MaskedTensor {
  /// Visible units in original order, one per row: [n_visible × C] for
  /// spatial masks (a pixel's spectrum), [n_visible × P·P] for spectral.
  Tensor visible;
  MaskSpec spec;
  Shape original_shape;  // (C1+C2)×P×P

  /// Masked image T^M: visible units in place, masked units zero-filled.
  Tensor reassemble() const;
  /// Binary (C1+C2)×P×P tensor, 1 on every element of a masked unit.
  Tensor element_mask() const;
};

MaskedTensor apply_spatial_mask(const Tensor& t, const MaskSpec& spec);
MaskedTensor apply_spectral_mask(const Tensor& t, const MaskSpec& spec);
MaskedTensor apply_mask(const Tensor& t, const MaskSpec& spec);

/// Element mask of `spec` over a C×P×P cube without materializing visible units.
Tensor element_mask(const MaskSpec& spec, const Shape& cube_shape);

}  // namespace ssmae
