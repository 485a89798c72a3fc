#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ssmae {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

struct TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

// Called with the producing node (its grad buffer holds dLoss/dOutput) and
// must accumulate into the grads of its parents.
using BackwardFn = std::function<void(TensorImpl& out)>;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty when absent
  bool requires_grad = false;
  std::uint64_t id = 0;

  // Recording of the op that produced this tensor. Empty for leaves.
  const char* op = nullptr;
  std::vector<ImplPtr> parents;
  BackwardFn backward;
  bool consumed = false;

  bool is_leaf() const { return op == nullptr; }
  // Adds g into grad, allocating on first touch. No-op unless requires_grad.
  void accumulate(std::size_t i, double g);
  std::span<double> grad_buffer();
};

}  // namespace detail

/// Dense row-major double tensor that optionally participates in a recorded
/// computation graph. Copies are shallow handles; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Mutable access to values. Only meaningful on leaves: mutating a recorded
  // intermediate silently invalidates its graph.
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  Tensor detach() const;
  Tensor clone() const;

  /// Reverse-mode differentiation from a scalar. Every requires_grad leaf
  /// reached receives dThis/dLeaf. A graph can be differentiated once, and
  /// reached leaves must not hold a stale gradient.
  void backward() const;

  std::uint64_t id() const;
  const detail::ImplPtr& impl() const { return impl_; }
  static Tensor wrap(detail::ImplPtr impl);

 private:
  detail::ImplPtr impl_;
};

/// One recorded op in topological order, as traversed by backward().
struct GraphNode {
  std::string op;
  std::vector<std::uint64_t> inputs;
  std::uint64_t output = 0;
};

/// Recorded ops reachable from `root`, parents before children.
std::vector<GraphNode> trace_graph(const Tensor& root);

/// Graph recording switch (thread-local). Ops run with recording disabled
/// produce plain tensors even from requires_grad inputs.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

namespace detail {

// Builds the output tensor for an op; attaches the graph record when any
// parent requires grad and recording is enabled.
Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::vector<ImplPtr> parents, BackwardFn backward);

}  // namespace detail

}  // namespace ssmae
