#include "ssmae/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssmae/error.hpp"
#include "ssmae/rng.hpp"

namespace ssmae {

namespace {

void require_cube(const Tensor& t) {
  if (t.rank() != 3 || t.dim(1) != t.dim(2)) {
    fail(Errc::contract, "masking expects a (C1+C2)×P×P tensor, got " + shape_str(t.shape()));
  }
}

// Hand-built specs reach the apply functions too.
void require_well_formed(const MaskSpec& spec) {
  for (std::size_t i = 0; i < spec.masked.size(); ++i) {
    if (spec.masked[i] >= spec.total_units || (i > 0 && spec.masked[i] <= spec.masked[i - 1])) {
      fail(Errc::contract, "masked units must be sorted, unique and below " + std::to_string(spec.total_units));
    }
  }
}

}  // namespace

bool MaskSpec::is_masked(std::size_t unit) const {
  return std::binary_search(masked.begin(), masked.end(), unit);
}

std::vector<std::size_t> MaskSpec::visible() const {
  std::vector<std::size_t> out;
  out.reserve(total_units - masked.size());
  std::size_t m = 0;
  for (std::size_t u = 0; u < total_units; ++u) {
    if (m < masked.size() && masked[m] == u) {
      ++m;
      continue;
    }
    out.push_back(u);
  }
  return out;
}

std::size_t masked_unit_count(std::size_t eligible, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    fail(Errc::parameter, "masking ratio " + std::to_string(ratio) + " outside [0, 1]");
  }
  const double x = ratio * static_cast<double>(eligible);
  const auto n = static_cast<std::size_t>(std::floor(x + 0.5 + 1e-9));
  return std::min(n, eligible);
}

MaskSpec sample_mask(MaskMode mode, std::size_t total_units, double ratio, std::uint64_t seed,
                     std::span<const std::size_t> protected_units) {
  MaskSpec spec;
  spec.mode = mode;
  spec.total_units = total_units;
  spec.seed = seed;
  spec.protected_units.assign(protected_units.begin(), protected_units.end());
  std::sort(spec.protected_units.begin(), spec.protected_units.end());
  spec.protected_units.erase(std::unique(spec.protected_units.begin(), spec.protected_units.end()),
                             spec.protected_units.end());
  if (!spec.protected_units.empty() && spec.protected_units.back() >= total_units) {
    fail(Errc::parameter, "protected unit " + std::to_string(spec.protected_units.back()) + " outside [0, " +
                              std::to_string(total_units) + ")");
  }

  std::vector<std::size_t> eligible;
  for (std::size_t u = 0; u < total_units; ++u) {
    if (!std::binary_search(spec.protected_units.begin(), spec.protected_units.end(), u)) eligible.push_back(u);
  }
  const auto count = masked_unit_count(eligible.size(), ratio);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(eligible));
  spec.masked.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(spec.masked.begin(), spec.masked.end());
  return spec;
}

MaskedTensor apply_spatial_mask(const Tensor& t, const MaskSpec& spec) {
  require_cube(t);
  const auto channels = t.dim(0), pixels = t.dim(1) * t.dim(2);
  if (spec.mode != MaskMode::spatial || spec.total_units != pixels) {
    fail(Errc::contract, "spatial mask over " + std::to_string(spec.total_units) + " units does not fit " +
                             shape_str(t.shape()));
  }
  require_well_formed(spec);
  const auto vis = spec.visible();
  std::vector<double> rows(vis.size() * channels);
  auto src = t.data();
  for (std::size_t r = 0; r < vis.size(); ++r)
    for (std::size_t c = 0; c < channels; ++c) rows[r * channels + c] = src[c * pixels + vis[r]];
  return MaskedTensor{Tensor({vis.size(), channels}, std::move(rows)), spec, t.shape()};
}

MaskedTensor apply_spectral_mask(const Tensor& t, const MaskSpec& spec) {
  require_cube(t);
  const auto channels = t.dim(0), pixels = t.dim(1) * t.dim(2);
  if (spec.mode != MaskMode::spectral || spec.total_units != channels) {
    fail(Errc::contract, "spectral mask over " + std::to_string(spec.total_units) + " units does not fit " +
                             shape_str(t.shape()));
  }
  require_well_formed(spec);
  for (auto p : spec.protected_units) {
    if (spec.is_masked(p)) fail(Errc::contract, "protected band " + std::to_string(p) + " is masked");
  }
  const auto vis = spec.visible();
  std::vector<double> rows(vis.size() * pixels);
  auto src = t.data();
  for (std::size_t r = 0; r < vis.size(); ++r) {
    std::copy_n(src.begin() + vis[r] * pixels, pixels, rows.begin() + r * pixels);
  }
  return MaskedTensor{Tensor({vis.size(), pixels}, std::move(rows)), spec, t.shape()};
}

MaskedTensor apply_mask(const Tensor& t, const MaskSpec& spec) {
  return spec.mode == MaskMode::spatial ? apply_spatial_mask(t, spec) : apply_spectral_mask(t, spec);
}

Tensor element_mask(const MaskSpec& spec, const Shape& cube_shape) {
  if (cube_shape.size() != 3) fail(Errc::contract, "element_mask expects a C×P×P shape, got " + shape_str(cube_shape));
  const auto channels = cube_shape[0], pixels = cube_shape[1] * cube_shape[2];
  require_well_formed(spec);
  if (spec.total_units != (spec.mode == MaskMode::spatial ? pixels : channels)) {
    fail(Errc::contract, "mask over " + std::to_string(spec.total_units) + " units does not fit " + shape_str(cube_shape));
  }
  std::vector<double> m(channels * pixels, 0.0);
  for (auto u : spec.masked) {
    if (spec.mode == MaskMode::spatial) {
      for (std::size_t c = 0; c < channels; ++c) m[c * pixels + u] = 1.0;
    } else {
      std::fill_n(m.begin() + u * pixels, pixels, 1.0);
    }
  }
  return Tensor(cube_shape, std::move(m));
}

Tensor MaskedTensor::element_mask() const { return ssmae::element_mask(spec, original_shape); }

Tensor MaskedTensor::reassemble() const {
  const auto channels = original_shape.at(0), pixels = original_shape.at(1) * original_shape.at(2);
  std::vector<double> out(channels * pixels, 0.0);
  const auto vis = spec.visible();
  auto rows = visible.data();
  for (std::size_t r = 0; r < vis.size(); ++r) {
    if (spec.mode == MaskMode::spatial) {
      for (std::size_t c = 0; c < channels; ++c) out[c * pixels + vis[r]] = rows[r * channels + c];
    } else {
      std::copy_n(rows.begin() + r * pixels, pixels, out.begin() + vis[r] * pixels);
    }
  }
  return Tensor(original_shape, std::move(out));
}

}  // namespace ssmae
