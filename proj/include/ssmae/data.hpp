#pragma once

#include <cstdint>
#include <vector>

#include "ssmae/model.hpp"
#include "ssmae/tensor.hpp"

namespace ssmae {

struct SceneConfig {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t classes = 5;     // L
  std::size_t hsi_bands = 48;  // C_full
  std::size_t aux_channels = 1;
  double noise = 0.1;          // σ of the additive Gaussian noise
  double region_scale = 6.0;   // smoothing width of the label field, pixels
};

/// Label map, row-major; 0 = unlabeled, classes 1..L.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint16_t> labels;

  std::uint16_t at(std::size_t row, std::size_t col) const { return labels[row * width + col]; }
};

struct Scene {
  SceneConfig cfg;
  std::uint64_t seed = 0;
  Tensor hsi;             // [C_full×H×W]
  Tensor aux;             // [C_aux×H×W]
  LabelMap gt;
  Tensor signatures;      // [L×C_full]
  Tensor aux_signatures;  // [L×C_aux]
};

Scene generate_scene(const SceneConfig& cfg, std::uint64_t seed);

/// Separable Gaussian blur of each H×W plane of x[C×H×W], mirrored borders.
std::vector<double> gaussian_blur(std::vector<double> planes, std::size_t h, std::size_t w, double sigma);

struct PcaModel {
  std::vector<double> mean;     // C_full
  std::vector<double> basis;    // C_full×K, row-major, orthonormal columns
  std::vector<double> eigvals;  // K, descending
  std::size_t channels = 0;
  std::size_t components = 0;
};

/// Top-K eigenpairs of a symmetric PSD matrix [n×n] by power iteration with
/// deflation, each pair polished by Rayleigh-quotient iteration.
void symmetric_eigen(const std::vector<double>& matrix, std::size_t n, std::size_t k, std::vector<double>& eigvals,
                     std::vector<double>& vectors);

/// pixels[n×C_full], one spectrum per row.
PcaModel pca_fit(const Tensor& pixels, std::size_t k);
/// Spectra of a cube [C×H×W] as rows [H·W × C].
Tensor cube_pixels(const Tensor& cube);

enum class Standardize {
  per_channel,  // every output channel scaled to unit variance
  shared,       // one scale for all channels: the mean channel variance becomes 1
  none,
};

/// Projection basisᵀ(x - mean) per pixel, then the chosen standardization
/// over the scene. cube[C_full×H×W] -> [K×H×W].
Tensor pca_apply(const PcaModel& model, const Tensor& cube, Standardize mode = Standardize::per_channel);

/// Zero mean, unit variance per channel over the scene.
Tensor standardize_channels(const Tensor& cube);

/// P×P window of cube[C×H×W] centered at (row, col), mirrored at the borders.
Tensor extract_window(const Tensor& cube, std::size_t row, std::size_t col, std::size_t p);

/// Patch pair at (row, col). With require_label, an unlabeled center is a sample error.
Patch extract_patch(const Tensor& aux, const Tensor& reduced_hsi, const LabelMap& gt, std::size_t row,
                    std::size_t col, std::size_t p, bool require_label = true);

struct Site {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t label = 0;  // 1..L
};

struct SplitManifest {
  std::vector<std::vector<Site>> train;  // per class, index label-1
  std::vector<std::vector<Site>> test;

  std::vector<Site> all_train() const;
  std::vector<Site> all_test() const;
};

/// Per class, a seeded draw without replacement of `per_class_train` sites
/// (a count, or a fraction of the population when in (0, 1)); the rest is test.
SplitManifest split_samples(const LabelMap& gt, std::size_t classes, double per_class_train, std::uint64_t seed);

}  // namespace ssmae
