#include "ssmae/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "ssmae/error.hpp"

namespace ssmae {

namespace {

using detail::ImplPtr;
using detail::TensorImpl;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    fail(Errc::dimension, std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                              shape_str(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(Errc::dimension, std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                              shape_str(b.shape()));
  }
}

// Grad buffer of a parent, or an empty span when it does not take gradients.
std::span<double> grad_of(const ImplPtr& p) {
  if (!p->requires_grad) return {};
  return p->grad_buffer();
}

Tensor unary(const char* op, const Tensor& x, std::vector<double> y, detail::BackwardFn bw) {
  return detail::make_result(op, x.shape(), std::move(y), {x.impl()}, std::move(bw));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    fail(Errc::dimension, "matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                              shape_str(b.shape()));
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(m * n);
  Map(c.data(), m, n).noalias() = MapC(a.data().data(), m, k) * MapC(b.data().data(), k, n);
  return detail::make_result("matmul", {m, n}, std::move(c), {a.impl(), b.impl()},
                             [m, k, n](TensorImpl& out) {
                               MapC g(out.grad.data(), m, n);
                               const auto& pa = out.parents[0];
                               const auto& pb = out.parents[1];
                               if (pa->requires_grad) {
                                 Map(pa->grad_buffer().data(), m, k).noalias() +=
                                     g * MapC(pb->data.data(), k, n).transpose();
                               }
                               if (pb->requires_grad) {
                                 Map(pb->grad_buffer().data(), k, n).noalias() +=
                                     MapC(pa->data.data(), m, k).transpose() * g;
                               }
                             });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const auto m = a.dim(0), n = a.dim(1);
  std::vector<double> t(m * n);
  Map(t.data(), n, m) = MapC(a.data().data(), m, n).transpose();
  return detail::make_result("transpose", {n, m}, std::move(t), {a.impl()}, [m, n](TensorImpl& out) {
    auto ga = grad_of(out.parents[0]);
    if (!ga.empty()) Map(ga.data(), m, n) += MapC(out.grad.data(), n, m).transpose();
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  std::vector<double> y(a.numel());
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = da[i] + db[i];
  return detail::make_result("add", a.shape(), std::move(y), {a.impl(), b.impl()}, [](TensorImpl& out) {
    for (const auto& p : out.parents) {
      auto g = grad_of(p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  std::vector<double> y(a.numel());
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = da[i] - db[i];
  return detail::make_result("sub", a.shape(), std::move(y), {a.impl(), b.impl()}, [](TensorImpl& out) {
    auto ga = grad_of(out.parents[0]);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += out.grad[i];
    auto gb = grad_of(out.parents[1]);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= out.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  std::vector<double> y(a.numel());
  auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = da[i] * db[i];
  return detail::make_result("mul", a.shape(), std::move(y), {a.impl(), b.impl()}, [](TensorImpl& out) {
    const auto& pa = out.parents[0];
    const auto& pb = out.parents[1];
    auto ga = grad_of(pa);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += out.grad[i] * pb->data[i];
    auto gb = grad_of(pb);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += out.grad[i] * pa->data[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> y(a.data().begin(), a.data().end());
  for (auto& v : y) v *= factor;
  return unary("scale", a, std::move(y), [factor](TensorImpl& out) {
    auto g = grad_of(out.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * out.grad[i];
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || x.rank() == 0 || x.shape().back() != bias.dim(0)) {
    fail(Errc::dimension, "add_bias: cannot broadcast " + shape_str(bias.shape()) + " over " +
                              shape_str(x.shape()));
  }
  const auto d = bias.dim(0);
  std::vector<double> y(x.data().begin(), x.data().end());
  auto db = bias.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += db[i % d];
  return detail::make_result("add_bias", x.shape(), std::move(y), {x.impl(), bias.impl()},
                             [d](TensorImpl& out) {
                               auto gx = grad_of(out.parents[0]);
                               for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += out.grad[i];
                               auto gb = grad_of(out.parents[1]);
                               if (!gb.empty()) {
                                 for (std::size_t i = 0; i < out.grad.size(); ++i) gb[i % d] += out.grad[i];
                               }
                             });
}

Tensor mul_element(const Tensor& x, const Tensor& s, std::size_t index) {
  if (index >= s.numel()) {
    fail(Errc::dimension, "mul_element: index " + std::to_string(index) + " outside " + shape_str(s.shape()));
  }
  const double factor = s.data()[index];
  std::vector<double> y(x.data().begin(), x.data().end());
  for (auto& v : y) v *= factor;
  return detail::make_result("mul_element", x.shape(), std::move(y), {x.impl(), s.impl()},
                             [index](TensorImpl& out) {
                               const auto& px = out.parents[0];
                               const auto& ps = out.parents[1];
                               const double f = ps->data[index];
                               auto gx = grad_of(px);
                               for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += f * out.grad[i];
                               if (ps->requires_grad) {
                                 double acc = 0.0;
                                 for (std::size_t i = 0; i < out.grad.size(); ++i) acc += out.grad[i] * px->data[i];
                                 ps->accumulate(index, acc);
                               }
                             });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_bias(matmul(x, w), b); }

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    fail(Errc::dimension, "reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  }
  std::vector<double> y(x.data().begin(), x.data().end());
  return detail::make_result("reshape", std::move(shape), std::move(y), {x.impl()}, [](TensorImpl& out) {
    auto g = grad_of(out.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t width) {
  require_rank(x, 2, "slice_cols");
  const auto n = x.dim(0), d = x.dim(1);
  if (start + width > d) {
    fail(Errc::dimension, "slice_cols: columns [" + std::to_string(start) + ", " +
                              std::to_string(start + width) + ") outside " + shape_str(x.shape()));
  }
  std::vector<double> y(n * width);
  auto dx = x.data();
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(dx.begin() + r * d + start, width, y.begin() + r * width);
  }
  return detail::make_result("slice_cols", {n, width}, std::move(y), {x.impl()},
                             [n, d, start, width](TensorImpl& out) {
                               auto g = grad_of(out.parents[0]);
                               if (g.empty()) return;
                               for (std::size_t r = 0; r < n; ++r)
                                 for (std::size_t c = 0; c < width; ++c) g[r * d + start + c] += out.grad[r * width + c];
                             });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) fail(Errc::dimension, "concat_cols: no inputs");
  const auto n = parts[0].dim(0);
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  std::vector<ImplPtr> parents;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != n) {
      fail(Errc::dimension, "concat_cols: row mismatch " + shape_str(parts[0].shape()) + " vs " +
                                shape_str(p.shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
    parents.push_back(p.impl());
  }
  std::vector<double> y(n * total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto src = parts[k].data();
    for (std::size_t r = 0; r < n; ++r) std::copy_n(src.begin() + r * widths[k], widths[k], y.begin() + r * total + off);
    off += widths[k];
  }
  return detail::make_result("concat_cols", {n, total}, std::move(y), std::move(parents),
                             [n, total, widths](TensorImpl& out) {
                               std::size_t off = 0;
                               for (std::size_t k = 0; k < widths.size(); ++k) {
                                 auto g = grad_of(out.parents[k]);
                                 if (!g.empty()) {
                                   for (std::size_t r = 0; r < n; ++r)
                                     for (std::size_t c = 0; c < widths[k]; ++c)
                                       g[r * widths[k] + c] += out.grad[r * total + off + c];
                                 }
                                 off += widths[k];
                               }
                             });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) fail(Errc::dimension, "concat_rows: no inputs");
  const auto d = parts[0].dim(1);
  std::size_t rows = 0;
  std::vector<std::size_t> sizes;
  std::vector<ImplPtr> parents;
  std::vector<double> y;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.dim(1) != d) {
      fail(Errc::dimension, "concat_rows: width mismatch " + shape_str(parts[0].shape()) + " vs " +
                                shape_str(p.shape()));
    }
    rows += p.dim(0);
    sizes.push_back(p.numel());
    parents.push_back(p.impl());
    y.insert(y.end(), p.data().begin(), p.data().end());
  }
  return detail::make_result("concat_rows", {rows, d}, std::move(y), std::move(parents),
                             [sizes](TensorImpl& out) {
                               std::size_t off = 0;
                               for (std::size_t k = 0; k < sizes.size(); ++k) {
                                 auto g = grad_of(out.parents[k]);
                                 for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[off + i];
                                 off += sizes[k];
                               }
                             });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_rank(x, 2, "gather_rows");
  const auto n = x.dim(0), d = x.dim(1);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> y(idx.size() * d);
  auto dx = x.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= n) {
      fail(Errc::dimension, "gather_rows: row " + std::to_string(idx[r]) + " outside " + shape_str(x.shape()));
    }
    std::copy_n(dx.begin() + idx[r] * d, d, y.begin() + r * d);
  }
  const auto count = idx.size();
  return detail::make_result("gather_rows", {count, d}, std::move(y), {x.impl()},
                             [idx = std::move(idx), d](TensorImpl& out) {
                               auto g = grad_of(out.parents[0]);
                               if (g.empty()) return;
                               for (std::size_t r = 0; r < idx.size(); ++r)
                                 for (std::size_t c = 0; c < d; ++c) g[idx[r] * d + c] += out.grad[r * d + c];
                             });
}

Tensor select(const Tensor& x, std::size_t index) {
  if (x.rank() < 2) fail(Errc::dimension, "select: needs rank >= 2, got " + shape_str(x.shape()));
  if (index >= x.dim(0)) {
    fail(Errc::dimension, "select: index " + std::to_string(index) + " outside " + shape_str(x.shape()));
  }
  Shape inner(x.shape().begin() + 1, x.shape().end());
  const auto len = shape_numel(inner);
  std::vector<double> y(x.data().begin() + index * len, x.data().begin() + (index + 1) * len);
  return detail::make_result("select", std::move(inner), std::move(y), {x.impl()},
                             [index, len](TensorImpl& out) {
                               auto g = grad_of(out.parents[0]);
                               if (g.empty()) return;
                               for (std::size_t i = 0; i < len; ++i) g[index * len + i] += out.grad[i];
                             });
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) fail(Errc::dimension, "stack: no inputs");
  Shape shape = parts[0].shape();
  std::vector<ImplPtr> parents;
  std::vector<double> y;
  for (const auto& p : parts) {
    require_same(parts[0], p, "stack");
    parents.push_back(p.impl());
    y.insert(y.end(), p.data().begin(), p.data().end());
  }
  const auto len = parts[0].numel();
  shape.insert(shape.begin(), parts.size());
  return detail::make_result("stack", std::move(shape), std::move(y), std::move(parents),
                             [len](TensorImpl& out) {
                               for (std::size_t k = 0; k < out.parents.size(); ++k) {
                                 auto g = grad_of(out.parents[k]);
                                 for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[k * len + i];
                               }
                             });
}

Tensor exp(const Tensor& x) {
  std::vector<double> y(x.numel());
  auto dx = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::exp(dx[i]);
  return unary("exp", x, std::move(y), [](TensorImpl& out) {
    auto g = grad_of(out.parents[0]);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * out.data[i];
  });
}

Tensor gelu(const Tensor& x) {
  std::vector<double> y(x.numel());
  auto dx = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = dx[i] * normal_cdf(dx[i]);
  return unary("gelu", x, std::move(y), [](TensorImpl& out) {
    const auto& px = out.parents[0];
    auto g = grad_of(px);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = px->data[i];
      g[i] += out.grad[i] * (normal_cdf(v) + v * normal_pdf(v));
    }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size()) fail(Errc::dimension, "softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const auto len = s[axis];
  std::vector<double> y(x.numel());
  auto dx = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = dx[base];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, dx[base + j * inner]);
      double z = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        y[base + j * inner] = std::exp(dx[base + j * inner] - mx);
        z += y[base + j * inner];
      }
      for (std::size_t j = 0; j < len; ++j) y[base + j * inner] /= z;
    }
  }
  return unary("softmax", x, std::move(y), [outer, inner, len](TensorImpl& out) {
    auto g = grad_of(out.parents[0]);
    if (g.empty()) return;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < len; ++j) dot += out.grad[base + j * inner] * out.data[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const auto k = base + j * inner;
          g[k] += out.data[k] * (out.grad[k] - dot);
        }
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return detail::make_result("sum", {1}, {acc}, {x.impl()}, [](TensorImpl& out) {
    auto g = grad_of(out.parents[0]);
    for (auto& v : g) v += out.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const double n = static_cast<double>(x.numel());
  return detail::make_result("mean", {1}, {acc / n}, {x.impl()}, [n](TensorImpl& out) {
    auto g = grad_of(out.parents[0]);
    for (auto& v : g) v += out.grad[0] / n;
  });
}

Tensor mean_rows(const Tensor& x) {
  require_rank(x, 2, "mean_rows");
  const auto n = x.dim(0), d = x.dim(1);
  std::vector<double> y(d, 0.0);
  auto dx = x.data();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) y[c] += dx[r * d + c];
  for (auto& v : y) v /= static_cast<double>(n);
  return detail::make_result("mean_rows", {1, d}, std::move(y), {x.impl()}, [n, d](TensorImpl& out) {
    auto g = grad_of(out.parents[0]);
    if (g.empty()) return;
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) g[r * d + c] += out.grad[c] * inv;
  });
}

// ---------------------------------------------------------------------------

namespace {

Tensor conv_pointwise(const Tensor& x, const Tensor& k) {
  if (x.rank() < 2 || k.rank() != 2 || k.dim(1) != x.dim(1)) {
    fail(Errc::dimension, "convolve(pointwise): channel mismatch between input " + shape_str(x.shape()) +
                              " and kernel " + shape_str(k.shape()));
  }
  const auto batch = x.dim(0), cin = x.dim(1), cout = k.dim(0);
  const auto spatial = x.numel() / (batch * cin);
  Shape shape = x.shape();
  shape[1] = cout;
  std::vector<double> y(batch * cout * spatial);
  for (std::size_t n = 0; n < batch; ++n) {
    Map(y.data() + n * cout * spatial, cout, spatial).noalias() =
        MapC(k.data().data(), cout, cin) * MapC(x.data().data() + n * cin * spatial, cin, spatial);
  }
  return detail::make_result("conv_pointwise", std::move(shape), std::move(y), {x.impl(), k.impl()},
                             [batch, cin, cout, spatial](TensorImpl& out) {
                               const auto& px = out.parents[0];
                               const auto& pk = out.parents[1];
                               for (std::size_t n = 0; n < batch; ++n) {
                                 MapC g(out.grad.data() + n * cout * spatial, cout, spatial);
                                 if (px->requires_grad) {
                                   Map(px->grad_buffer().data() + n * cin * spatial, cin, spatial).noalias() +=
                                       MapC(pk->data.data(), cout, cin).transpose() * g;
                                 }
                                 if (pk->requires_grad) {
                                   Map(pk->grad_buffer().data(), cout, cin).noalias() +=
                                       g * MapC(px->data.data() + n * cin * spatial, cin, spatial).transpose();
                                 }
                               }
                             });
}

// Shared driver for the depthwise 2-D and per-volume 3-D convolutions: each
// channel plane (depth×rows×cols, depth 1 for 2-D) is cross-correlated with
// its own 3×3(×3) kernel under zero same-padding.
struct DepthwiseGeom {
  std::size_t batch, channels, depth, rows, cols, kdepth;
};

template <typename Visit>
void depthwise_loop(const DepthwiseGeom& g, Visit&& visit) {
  const std::size_t plane = g.depth * g.rows * g.cols;
  const std::size_t ksize = g.kdepth * 9;
  const long dlo = g.kdepth == 3 ? -1 : 0;
  const long dhi = g.kdepth == 3 ? 1 : 0;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t c = 0; c < g.channels; ++c) {
      const std::size_t base = (n * g.channels + c) * plane;
      for (long z = 0; z < static_cast<long>(g.depth); ++z)
        for (long r = 0; r < static_cast<long>(g.rows); ++r)
          for (long q = 0; q < static_cast<long>(g.cols); ++q) {
            const std::size_t o = base + (static_cast<std::size_t>(z) * g.rows + r) * g.cols + q;
            for (long dz = dlo; dz <= dhi; ++dz) {
              const long zz = z + dz;
              if (zz < 0 || zz >= static_cast<long>(g.depth)) continue;
              for (long dr = -1; dr <= 1; ++dr) {
                const long rr = r + dr;
                if (rr < 0 || rr >= static_cast<long>(g.rows)) continue;
                for (long dq = -1; dq <= 1; ++dq) {
                  const long qq = q + dq;
                  if (qq < 0 || qq >= static_cast<long>(g.cols)) continue;
                  const std::size_t i = base + (static_cast<std::size_t>(zz) * g.rows + rr) * g.cols + qq;
                  const std::size_t kk = c * ksize + static_cast<std::size_t>(((dz - dlo) * 3 + (dr + 1)) * 3 + (dq + 1));
                  visit(o, i, kk);
                }
              }
            }
          }
    }
  }
}

Tensor conv_depthwise(const Tensor& x, const Tensor& k, bool volumetric) {
  const char* name = volumetric ? "convolve(conv3d)" : "convolve(depthwise3x3)";
  const std::size_t xrank = volumetric ? 5 : 4;
  if (x.rank() != xrank) fail(Errc::dimension, std::string(name) + ": bad input rank " + shape_str(x.shape()));
  const bool kernel_ok = volumetric
                             ? (k.rank() == 4 && k.dim(1) == 3 && k.dim(2) == 3 && k.dim(3) == 3)
                             : (k.rank() == 3 && k.dim(1) == 3 && k.dim(2) == 3);
  if (!kernel_ok || k.dim(0) != x.dim(1)) {
    fail(Errc::dimension, std::string(name) + ": channel mismatch between input " + shape_str(x.shape()) +
                              " and kernel " + shape_str(k.shape()));
  }
  DepthwiseGeom g{x.dim(0), x.dim(1), volumetric ? x.dim(2) : 1, x.dim(xrank - 2), x.dim(xrank - 1),
                  volumetric ? std::size_t{3} : std::size_t{1}};
  std::vector<double> y(x.numel(), 0.0);
  auto dx = x.data();
  auto dk = k.data();
  depthwise_loop(g, [&](std::size_t o, std::size_t i, std::size_t kk) { y[o] += dk[kk] * dx[i]; });
  return detail::make_result(volumetric ? "conv3d" : "conv_depthwise", x.shape(), std::move(y),
                             {x.impl(), k.impl()}, [g](TensorImpl& out) {
                               const auto& px = out.parents[0];
                               const auto& pk = out.parents[1];
                               auto gx = grad_of(px);
                               auto gk = grad_of(pk);
                               const auto& go = out.grad;
                               if (!gx.empty() && !gk.empty()) {
                                 depthwise_loop(g, [&](std::size_t o, std::size_t i, std::size_t kk) {
                                   gx[i] += pk->data[kk] * go[o];
                                   gk[kk] += px->data[i] * go[o];
                                 });
                               } else if (!gx.empty()) {
                                 depthwise_loop(g, [&](std::size_t o, std::size_t i, std::size_t kk) {
                                   gx[i] += pk->data[kk] * go[o];
                                 });
                               } else if (!gk.empty()) {
                                 depthwise_loop(g, [&](std::size_t o, std::size_t i, std::size_t kk) {
                                   gk[kk] += px->data[i] * go[o];
                                 });
                               }
                             });
}

}  // namespace

Tensor convolve(const Tensor& x, const Tensor& kernel, ConvMode mode) {
  switch (mode) {
    case ConvMode::pointwise: return conv_pointwise(x, kernel);
    case ConvMode::depthwise3x3: return conv_depthwise(x, kernel, false);
    case ConvMode::conv3d: return conv_depthwise(x, kernel, true);
  }
  fail(Errc::parameter, "convolve: unknown mode");
}

BatchNormState::BatchNormState(std::size_t channels)
    : running_mean(Shape{channels}), running_var(Tensor::full(Shape{channels}, 1.0)) {}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training) {
  if (x.rank() < 2) fail(Errc::dimension, "batch_norm: input must be N×C×..., got " + shape_str(x.shape()));
  const auto batch = x.dim(0), channels = x.dim(1);
  if (gamma.numel() != channels || beta.numel() != channels || state.channels() != channels) {
    fail(Errc::dimension, "batch_norm: channel mismatch for input " + shape_str(x.shape()));
  }
  const auto spatial = x.numel() / (batch * channels);
  const auto count = batch * spatial;
  auto dx = x.data();
  auto dg = gamma.data();
  auto db = beta.data();

  std::vector<double> mean_c(channels), inv_std(channels);
  if (training) {
    auto rm = state.running_mean.mutable_data();
    auto rv = state.running_var.mutable_data();
    for (std::size_t c = 0; c < channels; ++c) {
      double m = 0.0;
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t s = 0; s < spatial; ++s) m += dx[(n * channels + c) * spatial + s];
      m /= static_cast<double>(count);
      double v = 0.0;
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t s = 0; s < spatial; ++s) {
          const double e = dx[(n * channels + c) * spatial + s] - m;
          v += e * e;
        }
      v /= static_cast<double>(count);
      mean_c[c] = m;
      inv_std[c] = 1.0 / std::sqrt(v + state.eps);
      const double unbiased = count > 1 ? v * static_cast<double>(count) / static_cast<double>(count - 1) : v;
      rm[c] = (1.0 - state.momentum) * rm[c] + state.momentum * m;
      rv[c] = (1.0 - state.momentum) * rv[c] + state.momentum * unbiased;
    }
  } else {
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    for (std::size_t c = 0; c < channels; ++c) {
      mean_c[c] = rm[c];
      inv_std[c] = 1.0 / std::sqrt(rv[c] + state.eps);
    }
  }

  std::vector<double> xhat(x.numel()), y(x.numel());
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t s = 0; s < spatial; ++s) {
        const auto i = (n * channels + c) * spatial + s;
        xhat[i] = (dx[i] - mean_c[c]) * inv_std[c];
        y[i] = dg[c] * xhat[i] + db[c];
      }

  return detail::make_result(
      "batch_norm", x.shape(), std::move(y), {x.impl(), gamma.impl(), beta.impl()},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorImpl& out) {
        const auto& go = out.grad;
        const auto& pg = out.parents[1];
        auto gx = grad_of(out.parents[0]);
        auto gg = grad_of(pg);
        auto gb = grad_of(out.parents[2]);
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t s = 0; s < spatial; ++s) {
              const auto i = (n * channels + c) * spatial + s;
              sum_g += go[i];
              sum_gx += go[i] * xhat[i];
            }
          if (!gg.empty()) gg[c] += sum_gx;
          if (!gb.empty()) gb[c] += sum_g;
          if (gx.empty()) continue;
          const double gam = pg->data[c];
          const double m = static_cast<double>(count);
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t s = 0; s < spatial; ++s) {
              const auto i = (n * channels + c) * spatial + s;
              if (training) {
                gx[i] += gam * inv_std[c] * (go[i] - sum_g / m - xhat[i] * sum_gx / m);
              } else {
                gx[i] += gam * inv_std[c] * go[i];
              }
            }
        }
      });
}

// ---------------------------------------------------------------------------

Tensor mse_masked(const Tensor& pred, const Tensor& target, const Tensor& mask) {
  require_same(pred, target, "mse_masked");
  require_same(pred, mask, "mse_masked");
  auto dp = pred.data(), dt = target.data(), dm = mask.data();
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < dp.size(); ++i) {
    if (dm[i] != 0.0) {
      const double e = dp[i] - dt[i];
      acc += e * e;
      ++count;
    }
  }
  if (count == 0) fail(Errc::invalid_mask, "mse_masked: mask selects no elements");
  const double n = static_cast<double>(count);
  return detail::make_result("mse_masked", {1}, {acc / n}, {pred.impl(), target.impl(), mask.impl()},
                             [n](TensorImpl& out) {
                               const auto& pp = out.parents[0];
                               const auto& pt = out.parents[1];
                               const auto& pm = out.parents[2];
                               auto gp = grad_of(pp);
                               auto gt = grad_of(pt);
                               const double s = 2.0 * out.grad[0] / n;
                               for (std::size_t i = 0; i < pp->data.size(); ++i) {
                                 if (pm->data[i] == 0.0) continue;
                                 const double e = s * (pp->data[i] - pt->data[i]);
                                 if (!gp.empty()) gp[i] += e;
                                 if (!gt.empty()) gt[i] -= e;
                               }
                             });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  require_rank(logits, 2, "cross_entropy");
  const auto batch = logits.dim(0), classes = logits.dim(1);
  if (labels.size() != batch) {
    fail(Errc::dimension, "cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                              shape_str(logits.shape()));
  }
  for (auto l : labels) {
    if (l >= classes) {
      fail(Errc::label, "cross_entropy: label " + std::to_string(l) + " outside [0, " +
                            std::to_string(classes) + ")");
    }
  }
  auto dl = logits.data();
  std::vector<double> prob(logits.numel());
  double loss = 0.0;
  for (std::size_t n = 0; n < batch; ++n) {
    const double* row = dl.data() + n * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
    const double log_z = std::log(z) + mx;
    for (std::size_t c = 0; c < classes; ++c) prob[n * classes + c] = std::exp(row[c] - log_z);
    loss += log_z - row[labels[n]];
  }
  loss /= static_cast<double>(batch);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return detail::make_result("cross_entropy", {1}, {loss}, {logits.impl()},
                             [prob = std::move(prob), lab = std::move(lab), batch, classes](TensorImpl& out) {
                               auto g = grad_of(out.parents[0]);
                               if (g.empty()) return;
                               const double s = out.grad[0] / static_cast<double>(batch);
                               for (std::size_t n = 0; n < batch; ++n)
                                 for (std::size_t c = 0; c < classes; ++c) {
                                   const double onehot = c == lab[n] ? 1.0 : 0.0;
                                   g[n * classes + c] += s * (prob[n * classes + c] - onehot);
                                 }
                             });
}

}  // namespace ssmae
