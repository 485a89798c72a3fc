#include "ssmae/data.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "ssmae/error.hpp"
#include "ssmae/rng.hpp"

namespace ssmae {

namespace {

// Mirror index into [0, n) without repeating the edge sample: -1 -> 1, n -> n-2.
std::size_t mirror(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

std::vector<double> gaussian_kernel(double sigma) {
  const auto r = static_cast<std::ptrdiff_t>(3.0 * sigma) + 1;
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double total = 0.0;
  for (std::ptrdiff_t i = -r; i <= r; ++i) {
    const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + r)] = v;
    total += v;
  }
  for (auto& v : k) v /= total;
  return k;
}

// Blur along a strided line of n samples.
void blur_line(const double* in, double* out, std::size_t n, std::size_t stride, const std::vector<double>& k) {
  const auto r = static_cast<std::ptrdiff_t>(k.size() / 2);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::ptrdiff_t t = -r; t <= r; ++t) {
      acc += k[static_cast<std::size_t>(t + r)] * in[mirror(static_cast<std::ptrdiff_t>(i) + t, n) * stride];
    }
    out[i * stride] = acc;
  }
}

std::vector<double> smooth_signature(std::size_t c, Rng& rng) {
  std::vector<double> raw(3 * c);
  for (auto& v : raw) v = rng.normal();
  std::vector<double> blurred(raw.size());
  blur_line(raw.data(), blurred.data(), raw.size(), 1, gaussian_kernel(3.0));
  std::vector<double> s(blurred.begin() + static_cast<std::ptrdiff_t>(c), blurred.begin() + static_cast<std::ptrdiff_t>(2 * c));
  double mu = 0.0, var = 0.0;
  for (double v : s) mu += v;
  mu /= static_cast<double>(c);
  for (double v : s) var += (v - mu) * (v - mu);
  const double sd = std::sqrt(var / static_cast<double>(c));
  const double offset = rng.uniform(0.5, 1.5);
  for (auto& v : s) v = (sd > 0.0 ? (v - mu) / sd : 0.0) * 0.5 + offset;
  return s;
}

LabelMap label_field(const SceneConfig& cfg, Rng& rng) {
  const auto h = cfg.height, w = cfg.width, l = cfg.classes;
  std::vector<double> field(l * h * w);
  for (auto& v : field) v = rng.normal();
  field = gaussian_blur(std::move(field), h, w, cfg.region_scale);
  LabelMap gt{h, w, std::vector<std::uint16_t>(h * w)};
  for (std::size_t p = 0; p < h * w; ++p) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < l; ++k) {
      if (field[k * h * w + p] > field[best * h * w + p]) best = k;
    }
    gt.labels[p] = static_cast<std::uint16_t>(best + 1);
  }
  return gt;
}

bool all_classes_present(const LabelMap& gt, std::size_t classes) {
  std::vector<bool> seen(classes + 1, false);
  for (auto v : gt.labels) seen[v] = true;
  return std::all_of(seen.begin() + 1, seen.end(), [](bool b) { return b; });
}

void gram_schmidt(Eigen::VectorXd& v, const Eigen::MatrixXd& found, std::size_t count) {
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t j = 0; j < count; ++j) v -= found.col(static_cast<Eigen::Index>(j)).dot(v) * found.col(static_cast<Eigen::Index>(j));
  }
}

}  // namespace

std::vector<double> gaussian_blur(std::vector<double> planes, std::size_t h, std::size_t w, double sigma) {
  if (sigma <= 0.0) return planes;
  const auto k = gaussian_kernel(sigma);
  std::vector<double> tmp(planes.size());
  const std::size_t count = planes.size() / (h * w);
  for (std::size_t c = 0; c < count; ++c) {
    double* in = planes.data() + c * h * w;
    double* mid = tmp.data() + c * h * w;
    for (std::size_t r = 0; r < h; ++r) blur_line(in + r * w, mid + r * w, w, 1, k);
    for (std::size_t col = 0; col < w; ++col) blur_line(mid + col, in + col, h, w, k);
  }
  return planes;
}

Scene generate_scene(const SceneConfig& cfg, std::uint64_t seed) {
  if (cfg.classes < 2) fail(Errc::parameter, "generate_scene: needs at least 2 classes");
  if (cfg.height * cfg.width < cfg.classes) {
    fail(Errc::parameter, "generate_scene: " + std::to_string(cfg.height) + "x" + std::to_string(cfg.width) +
                              " pixels cannot hold " + std::to_string(cfg.classes) + " classes");
  }
  if (cfg.hsi_bands == 0 || cfg.aux_channels == 0) fail(Errc::parameter, "generate_scene: empty modality");
  if (cfg.noise < 0.0 || cfg.region_scale < 0.0) fail(Errc::parameter, "generate_scene: negative noise or scale");

  Scene s;
  s.cfg = cfg;
  s.seed = seed;
  // Regions come from a smoothed random field; redraw until every class owns a pixel.
  for (std::uint64_t attempt = 0;; ++attempt) {
    if (attempt == 64) fail(Errc::parameter, "generate_scene: could not place every class; lower region_scale");
    Rng field_rng(mix_seed(seed, 1, attempt));
    s.gt = label_field(cfg, field_rng);
    if (all_classes_present(s.gt, cfg.classes)) break;
  }

  const auto l = cfg.classes, c = cfg.hsi_bands, ca = cfg.aux_channels, hw = cfg.height * cfg.width;
  Rng sig_rng(mix_seed(seed, 2));
  std::vector<double> sig, aux_sig;
  for (std::size_t k = 0; k < l; ++k) {
    auto one = smooth_signature(c, sig_rng);
    sig.insert(sig.end(), one.begin(), one.end());
  }
  for (std::size_t k = 0; k < l * ca; ++k) aux_sig.push_back(sig_rng.uniform());
  s.signatures = Tensor({l, c}, sig);
  s.aux_signatures = Tensor({l, ca}, aux_sig);

  Rng noise_rng(mix_seed(seed, 3));
  std::vector<double> hsi(c * hw), aux(ca * hw);
  for (std::size_t b = 0; b < c; ++b) {
    for (std::size_t p = 0; p < hw; ++p) hsi[b * hw + p] = sig[(s.gt.labels[p] - 1u) * c + b];
  }
  for (std::size_t b = 0; b < ca; ++b) {
    for (std::size_t p = 0; p < hw; ++p) aux[b * hw + p] = aux_sig[(s.gt.labels[p] - 1u) * ca + b];
  }
  if (cfg.noise > 0.0) {
    for (auto& v : hsi) v += cfg.noise * noise_rng.normal();
    for (auto& v : aux) v += cfg.noise * noise_rng.normal();
  }
  s.hsi = Tensor({c, cfg.height, cfg.width}, std::move(hsi));
  s.aux = Tensor({ca, cfg.height, cfg.width}, std::move(aux));
  return s;
}

void symmetric_eigen(const std::vector<double>& matrix, std::size_t n, std::size_t k, std::vector<double>& eigvals,
                     std::vector<double>& vectors) {
  if (matrix.size() != n * n) fail(Errc::dimension, "symmetric_eigen: matrix is not n×n");
  if (k > n) fail(Errc::parameter, "symmetric_eigen: k=" + std::to_string(k) + " exceeds n=" + std::to_string(n));
  const auto N = static_cast<Eigen::Index>(n);
  const Eigen::MatrixXd a = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      matrix.data(), N, N);
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1e-300);
  Eigen::MatrixXd found(N, static_cast<Eigen::Index>(k));
  eigvals.assign(k, 0.0);
  Rng rng(0x5eed);

  for (std::size_t j = 0; j < k; ++j) {
    Eigen::VectorXd v(N);
    for (auto& x : v) x = rng.normal();
    gram_schmidt(v, found, j);
    v.normalize();
    double lambda = 0.0;
    bool null_space = false;
    // Power iteration on the deflated operator (previous eigenvectors projected out).
    for (int it = 0; it < 20000; ++it) {
      Eigen::VectorXd w = a * v;
      gram_schmidt(w, found, j);
      lambda = v.dot(w);
      const double residual = (w - lambda * v).norm();
      const double norm = w.norm();
      if (norm <= 1e-14 * scale) {
        null_space = true;
        break;
      }
      v = w / norm;
      if (residual <= 1e-13 * scale) break;
    }
    // Rayleigh-quotient iteration: cubic polish of the pair found above. Once
    // the shift hits the eigenvalue the solve degenerates, so a step is kept
    // only while it lowers the residual.
    if (!null_space) {
      auto residual_of = [&](const Eigen::VectorXd& u) { return (a * u - u.dot(a * u) * u).norm(); };
      double best = residual_of(v);
      for (int it = 0; it < 6 && best > 0.0; ++it) {
        lambda = v.dot(a * v);
        Eigen::MatrixXd shifted = a - lambda * Eigen::MatrixXd::Identity(N, N);
        Eigen::VectorXd y = shifted.partialPivLu().solve(v);
        if (!y.allFinite()) break;
        gram_schmidt(y, found, j);
        const double ny = y.norm();
        if (ny == 0.0 || !std::isfinite(ny)) break;
        y /= ny;
        if (y.dot(v) < 0.0) y = -y;
        const double r = residual_of(y);
        if (!(r < best)) break;
        best = r;
        v = y;
      }
      lambda = v.dot(a * v);
    }
    gram_schmidt(v, found, j);
    v.normalize();
    // Sign convention: the largest-magnitude component is positive.
    Eigen::Index big = 0;
    v.cwiseAbs().maxCoeff(&big);
    if (v(big) < 0.0) v = -v;
    found.col(static_cast<Eigen::Index>(j)) = v;
    eigvals[j] = std::max(lambda, 0.0);
  }

  // Deflation can return near-equal pairs out of order; keep them descending.
  std::vector<std::size_t> order(k);
  for (std::size_t i = 0; i < k; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return eigvals[x] > eigvals[y]; });
  std::vector<double> sorted_vals(k);
  vectors.assign(n * k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    sorted_vals[c] = eigvals[order[c]];
    for (std::size_t r = 0; r < n; ++r) {
      vectors[r * k + c] = found(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(order[c]));
    }
  }
  eigvals = std::move(sorted_vals);
}

Tensor cube_pixels(const Tensor& cube) {
  if (cube.rank() != 3) fail(Errc::dimension, "cube_pixels: expected C×H×W, got " + shape_str(cube.shape()));
  const auto c = cube.dim(0), hw = cube.dim(1) * cube.dim(2);
  auto d = cube.data();
  std::vector<double> out(hw * c);
  for (std::size_t b = 0; b < c; ++b) {
    for (std::size_t p = 0; p < hw; ++p) out[p * c + b] = d[b * hw + p];
  }
  return Tensor({hw, c}, std::move(out));
}

PcaModel pca_fit(const Tensor& pixels, std::size_t k) {
  if (pixels.rank() != 2) fail(Errc::dimension, "pca_fit: expected n×C pixels, got " + shape_str(pixels.shape()));
  const auto n = pixels.dim(0), c = pixels.dim(1);
  if (k == 0 || k > c) fail(Errc::parameter, "pca_fit: K=" + std::to_string(k) + " outside [1, " + std::to_string(c) + "]");
  if (n <= k) fail(Errc::parameter, "pca_fit: " + std::to_string(n) + " samples for K=" + std::to_string(k));

  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      pixels.data().data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c));
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mu;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);

  PcaModel m;
  m.channels = c;
  m.components = k;
  m.mean.assign(mu.data(), mu.data() + c);
  std::vector<double> flat(c * c);
  for (std::size_t r = 0; r < c; ++r) {
    for (std::size_t q = 0; q < c; ++q) flat[r * c + q] = cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(q));
  }
  symmetric_eigen(flat, c, k, m.eigvals, m.basis);
  return m;
}

namespace {

void standardize_rows(std::vector<double>& y, std::size_t channels, std::size_t hw, Standardize mode) {
  if (mode == Standardize::none) return;
  std::vector<double> mean(channels, 0.0), var(channels, 0.0);
  for (std::size_t b = 0; b < channels; ++b) {
    for (std::size_t p = 0; p < hw; ++p) mean[b] += y[b * hw + p];
    mean[b] /= static_cast<double>(hw);
    for (std::size_t p = 0; p < hw; ++p) var[b] += (y[b * hw + p] - mean[b]) * (y[b * hw + p] - mean[b]);
    var[b] /= static_cast<double>(hw);
  }
  double shared = 0.0;
  for (double v : var) shared += v;
  shared /= static_cast<double>(channels);
  for (std::size_t b = 0; b < channels; ++b) {
    const double v = mode == Standardize::shared ? shared : var[b];
    const double inv = v > 1e-24 ? 1.0 / std::sqrt(v) : 0.0;  // a constant channel maps to zeros
    for (std::size_t p = 0; p < hw; ++p) y[b * hw + p] = (y[b * hw + p] - mean[b]) * inv;
  }
}

}  // namespace

Tensor pca_apply(const PcaModel& model, const Tensor& cube, Standardize mode) {
  if (cube.rank() != 3 || cube.dim(0) != model.channels) {
    fail(Errc::contract, "pca_apply: model expects " + std::to_string(model.channels) + " channels, cube is " +
                             shape_str(cube.shape()));
  }
  const auto c = model.channels, k = model.components, h = cube.dim(1), w = cube.dim(2), hw = h * w;
  auto d = cube.data();
  std::vector<double> y(k * hw, 0.0);
  std::vector<double> centered(c);
  for (std::size_t p = 0; p < hw; ++p) {
    for (std::size_t b = 0; b < c; ++b) centered[b] = d[b * hw + p] - model.mean[b];
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t b = 0; b < c; ++b) acc += model.basis[b * k + j] * centered[b];
      y[j * hw + p] = acc;
    }
  }
  standardize_rows(y, k, hw, mode);
  return Tensor({k, h, w}, std::move(y));
}

Tensor standardize_channels(const Tensor& cube) {
  if (cube.rank() != 3) fail(Errc::dimension, "standardize_channels: expected C×H×W");
  std::vector<double> y(cube.data().begin(), cube.data().end());
  standardize_rows(y, cube.dim(0), cube.dim(1) * cube.dim(2), Standardize::per_channel);
  return Tensor(cube.shape(), std::move(y));
}

Tensor extract_window(const Tensor& cube, std::size_t row, std::size_t col, std::size_t p) {
  if (p == 0 || p % 2 == 0) fail(Errc::parameter, "patch size " + std::to_string(p) + " must be odd");
  if (cube.rank() != 3) fail(Errc::dimension, "extract_window: expected C×H×W, got " + shape_str(cube.shape()));
  const auto c = cube.dim(0), h = cube.dim(1), w = cube.dim(2);
  if (row >= h || col >= w) fail(Errc::parameter, "extract_window: center outside the scene");
  const auto r = static_cast<std::ptrdiff_t>(p / 2);
  auto d = cube.data();
  std::vector<double> out(c * p * p);
  for (std::size_t b = 0; b < c; ++b) {
    for (std::size_t i = 0; i < p; ++i) {
      const auto src_r = mirror(static_cast<std::ptrdiff_t>(row + i) - r, h);
      for (std::size_t j = 0; j < p; ++j) {
        const auto src_c = mirror(static_cast<std::ptrdiff_t>(col + j) - r, w);
        out[(b * p + i) * p + j] = d[(b * h + src_r) * w + src_c];
      }
    }
  }
  return Tensor({c, p, p}, std::move(out));
}

Patch extract_patch(const Tensor& aux, const Tensor& reduced_hsi, const LabelMap& gt, std::size_t row,
                    std::size_t col, std::size_t p, bool require_label) {
  if (aux.rank() != 3 || reduced_hsi.rank() != 3 || aux.dim(1) != gt.height || aux.dim(2) != gt.width ||
      reduced_hsi.dim(1) != gt.height || reduced_hsi.dim(2) != gt.width) {
    fail(Errc::dimension, "extract_patch: cubes " + shape_str(aux.shape()) + ", " + shape_str(reduced_hsi.shape()) +
                              " do not match the label map");
  }
  const auto label = gt.at(row, col);
  if (require_label && label == 0) {
    fail(Errc::sample, "extract_patch: pixel (" + std::to_string(row) + ", " + std::to_string(col) + ") is unlabeled");
  }
  return Patch{extract_window(aux, row, col, p), extract_window(reduced_hsi, row, col, p),
               label == 0 ? 0 : static_cast<std::size_t>(label - 1)};
}

std::vector<Site> SplitManifest::all_train() const {
  std::vector<Site> out;
  for (const auto& c : train) out.insert(out.end(), c.begin(), c.end());
  return out;
}

std::vector<Site> SplitManifest::all_test() const {
  std::vector<Site> out;
  for (const auto& c : test) out.insert(out.end(), c.begin(), c.end());
  return out;
}

SplitManifest split_samples(const LabelMap& gt, std::size_t classes, double per_class_train, std::uint64_t seed) {
  if (!(per_class_train >= 0.0)) fail(Errc::parameter, "split_samples: negative training count");
  const bool fraction = per_class_train > 0.0 && per_class_train < 1.0;
  if (!fraction && per_class_train != std::floor(per_class_train)) {
    fail(Errc::parameter, "split_samples: training count must be an integer or a fraction in (0, 1)");
  }
  std::vector<std::vector<Site>> by_class(classes);
  for (std::size_t r = 0; r < gt.height; ++r) {
    for (std::size_t c = 0; c < gt.width; ++c) {
      const auto v = gt.at(r, c);
      if (v == 0) continue;
      if (v > classes) fail(Errc::label, "split_samples: label " + std::to_string(v) + " exceeds " + std::to_string(classes));
      by_class[v - 1u].push_back({r, c, v});
    }
  }
  SplitManifest m;
  m.train.resize(classes);
  m.test.resize(classes);
  auto raster = [](const Site& a, const Site& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; };
  for (std::size_t k = 0; k < classes; ++k) {
    auto& sites = by_class[k];
    const auto n = fraction ? static_cast<std::size_t>(std::llround(per_class_train * double(sites.size())))
                            : static_cast<std::size_t>(per_class_train);
    if (n > 0 && sites.size() <= n) {
      fail(Errc::parameter, "split_samples: class " + std::to_string(k + 1) + " has " + std::to_string(sites.size()) +
                                " labeled pixels, needs more than " + std::to_string(n));
    }
    Rng rng(mix_seed(seed, 7, k));
    rng.shuffle(std::span<Site>(sites));
    m.train[k].assign(sites.begin(), sites.begin() + static_cast<std::ptrdiff_t>(n));
    m.test[k].assign(sites.begin() + static_cast<std::ptrdiff_t>(n), sites.end());
    std::sort(m.train[k].begin(), m.train[k].end(), raster);
    std::sort(m.test[k].begin(), m.test[k].end(), raster);
  }
  return m;
}

}  // namespace ssmae
