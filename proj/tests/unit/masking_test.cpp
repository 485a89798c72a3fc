#include <algorithm>
#include <set>

#include "helpers.hpp"
#include "ssmae/masking.hpp"
#include "ssmae/rng.hpp"

using namespace ssmae;

namespace {

// C×P×P cube with value 100c + pixel so every element is identifiable.
Tensor labeled_cube(std::size_t c, std::size_t p) {
  Tensor t({c, p, p});
  auto d = t.mutable_data();
  for (std::size_t b = 0; b < c; ++b)
    for (std::size_t i = 0; i < p * p; ++i) d[b * p * p + i] = 100.0 * static_cast<double>(b) + static_cast<double>(i) + 1;
  return t;
}

MaskSpec fixed(MaskMode mode, std::size_t total, std::vector<std::size_t> masked) {
  MaskSpec s;
  s.mode = mode;
  s.total_units = total;
  s.masked = std::move(masked);
  return s;
}

}  // namespace

TEST(MaskCount, Rounding) {
  EXPECT_EQ(masked_unit_count(49, 0.3), 15u);  // 14.7
  EXPECT_EQ(masked_unit_count(30, 0.5), 15u);
  EXPECT_EQ(masked_unit_count(5, 0.7), 4u);    // 3.5 rounds up
  EXPECT_EQ(masked_unit_count(10, 0.0), 0u);
  EXPECT_EQ(masked_unit_count(10, 1.0), 10u);
}

TEST(SampleMask, Extremes) {
  EXPECT_TRUE(sample_mask(MaskMode::spatial, 49, 0.0, 1).masked.empty());
  auto all = sample_mask(MaskMode::spatial, 49, 1.0, 1);
  EXPECT_EQ(all.masked.size(), 49u);
  EXPECT_TRUE(all.visible().empty());
}

TEST(SampleMask, CountSortedAndSeeded) {
  auto a = sample_mask(MaskMode::spatial, 49, 0.3, 42);
  EXPECT_EQ(a.masked.size(), 15u);
  EXPECT_TRUE(std::is_sorted(a.masked.begin(), a.masked.end()));
  EXPECT_EQ(std::set<std::size_t>(a.masked.begin(), a.masked.end()).size(), 15u);
  EXPECT_EQ(sample_mask(MaskMode::spatial, 49, 0.3, 42).masked, a.masked);
  EXPECT_NE(sample_mask(MaskMode::spatial, 49, 0.3, 43).masked, a.masked);
}

TEST(SampleMask, ProtectedNeverMasked) {
  const std::vector<std::size_t> prot{0, 3};
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto s = sample_mask(MaskMode::spectral, 10, 1.0, seed, prot);
    EXPECT_EQ(s.masked.size(), 8u);
    EXPECT_FALSE(s.is_masked(0));
    EXPECT_FALSE(s.is_masked(3));
  }
}

TEST(SampleMask, UniformOverUnits) {
  std::vector<int> hits(20, 0);
  for (std::uint64_t seed = 0; seed < 4000; ++seed)
    for (auto u : sample_mask(MaskMode::spatial, 20, 0.25, seed).masked) ++hits[u];
  for (int h : hits) EXPECT_NEAR(h, 1000, 150);
}

TEST(SampleMask, BadRatio) {
  EXPECT_ERRC(sample_mask(MaskMode::spatial, 9, 1.5, 0), Errc::parameter);
  EXPECT_ERRC(sample_mask(MaskMode::spatial, 9, -0.1, 0), Errc::parameter);
}

TEST(SpatialMask, EmptyMaskKeepsRasterOrder) {
  auto t = labeled_cube(4, 3);
  auto m = apply_spatial_mask(t, fixed(MaskMode::spatial, 9, {}));
  ASSERT_EQ(m.visible.shape(), (Shape{9, 4}));
  for (std::size_t px = 0; px < 9; ++px)
    for (std::size_t b = 0; b < 4; ++b) EXPECT_EQ(m.visible.at({px, b}), t.at({b, px / 3, px % 3}));
}

TEST(SpatialMask, OnlyPixelZeroVisible) {
  auto t = labeled_cube(4, 3);
  auto m = apply_spatial_mask(t, fixed(MaskMode::spatial, 9, {1, 2, 3, 4, 5, 6, 7, 8}));
  ASSERT_EQ(m.visible.shape(), (Shape{1, 4}));
  for (std::size_t b = 0; b < 4; ++b) EXPECT_EQ(m.visible.at({0, b}), t.at({b, 0, 0}));
}

TEST(SpatialMask, ReassemblyZerosMaskedColumns) {
  auto t = labeled_cube(3, 3);
  auto r = apply_spatial_mask(t, fixed(MaskMode::spatial, 9, {1, 3, 5})).reassemble();
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t px = 0; px < 9; ++px) {
      const bool masked = px == 1 || px == 3 || px == 5;
      EXPECT_EQ(r.at({b, px / 3, px % 3}), masked ? 0.0 : t.at({b, px / 3, px % 3}));
    }
}

TEST(SpectralMask, EmptyMaskKeepsBands) {
  auto t = labeled_cube(5, 3);
  auto m = apply_spectral_mask(t, fixed(MaskMode::spectral, 5, {}));
  ASSERT_EQ(m.visible.shape(), (Shape{5, 9}));
  for (std::size_t i = 0; i < t.numel(); ++i) EXPECT_EQ(m.visible.data()[i], t.data()[i]);
}

TEST(SpectralMask, AllHsiBandsMaskedLeavesAux) {
  auto t = labeled_cube(6, 3);
  const std::vector<std::size_t> prot{0};
  auto m = apply_spectral_mask(t, sample_mask(MaskMode::spectral, 6, 1.0, 3, prot));
  ASSERT_EQ(m.visible.shape(), (Shape{1, 9}));
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(m.visible.data()[i], t.data()[i]);
}

TEST(SpectralMask, ReassemblyZerosMaskedPlanes) {
  auto t = labeled_cube(6, 3);
  auto m = apply_spectral_mask(t, fixed(MaskMode::spectral, 6, {0, 4}));
  auto r = m.reassemble();
  auto em = m.element_mask();
  for (std::size_t b = 0; b < 6; ++b)
    for (std::size_t i = 0; i < 9; ++i) {
      const bool masked = b == 0 || b == 4;
      EXPECT_EQ(r.data()[b * 9 + i], masked ? 0.0 : t.data()[b * 9 + i]);
      EXPECT_EQ(em.data()[b * 9 + i], masked ? 1.0 : 0.0);
    }
}

TEST(Mask, ModeMismatchAndRange) {
  auto t = labeled_cube(4, 3);
  EXPECT_ERRC(apply_spatial_mask(t, fixed(MaskMode::spectral, 4, {})), Errc::contract);
  EXPECT_ERRC(apply_spatial_mask(t, fixed(MaskMode::spatial, 9, {9})), Errc::contract);
  EXPECT_ERRC(apply_spectral_mask(t, fixed(MaskMode::spectral, 5, {})), Errc::contract);
}
