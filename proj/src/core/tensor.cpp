#include "ssmae/tensor.hpp"

#include <atomic>
#include <sstream>
#include <unordered_set>

#include "ssmae/error.hpp"

namespace ssmae {

namespace {

std::atomic<std::uint64_t> next_id{1};
thread_local bool recording = true;

detail::ImplPtr new_impl(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    fail(Errc::dimension, "tensor of shape " + shape_str(shape) + " given " +
                              std::to_string(data.size()) + " values");
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  impl->id = next_id.fetch_add(1, std::memory_order_relaxed);
  return impl;
}

const detail::TensorImpl& checked(const detail::ImplPtr& impl) {
  if (!impl) fail(Errc::contract, "use of an undefined tensor");
  return *impl;
}

// Post-order DFS from root; iterative so long chains cannot overflow the stack.
std::vector<detail::TensorImpl*> topo_order(detail::TensorImpl* root) {
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<detail::TensorImpl*> seen;
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::TensorImpl* parent = node->parents[next++].get();
      if (!parent->is_leaf() && seen.insert(parent).second) stack.emplace_back(parent, 0);
      continue;
    }
    order.push_back(node);
    stack.pop_back();
  }
  return order;
}

}  // namespace

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::dimension: return "dimension error";
    case Errc::parameter: return "parameter error";
    case Errc::contract: return "contract error";
    case Errc::invalid_mask: return "invalid-mask error";
    case Errc::label: return "label error";
    case Errc::accumulation: return "accumulation error";
    case Errc::determinism: return "determinism error";
    case Errc::format: return "format error";
    case Errc::io: return "io error";
    case Errc::sample: return "sample error";
    case Errc::divergence: return "training-divergence error";
    case Errc::metric: return "metric error";
    case Errc::config: return "config error";
  }
  return "error";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

void detail::TensorImpl::accumulate(std::size_t i, double g) {
  if (!requires_grad) return;
  if (grad.empty()) grad.assign(data.size(), 0.0);
  grad[i] += g;
}

std::span<double> detail::TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  impl_ = new_impl(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(new_impl(std::move(shape), std::move(values), requires_grad)) {}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::wrap(detail::ImplPtr impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

const Shape& Tensor::shape() const { return checked(impl_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    fail(Errc::dimension, "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(impl_).data.size(); }

std::span<const double> Tensor::data() const { return checked(impl_).data; }

std::span<double> Tensor::mutable_data() {
  checked(impl_);
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) fail(Errc::contract, "item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) fail(Errc::dimension, "index rank mismatch for " + shape_str(s));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) fail(Errc::dimension, "index out of range for " + shape_str(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return impl_->data[flat];
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  checked(impl_);
  impl_->requires_grad = flag;
  return *this;
}

bool Tensor::is_leaf() const { return checked(impl_).is_leaf(); }

bool Tensor::has_grad() const { return !checked(impl_).grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) fail(Errc::contract, "tensor " + std::to_string(impl_->id) + " has no gradient");
  return impl_->grad;
}

void Tensor::zero_grad() {
  checked(impl_);
  impl_->grad.clear();
}

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data, false); }

Tensor Tensor::clone() const { return Tensor(shape(), impl_->data, impl_->requires_grad); }

std::uint64_t Tensor::id() const { return checked(impl_).id; }

void Tensor::backward() const {
  checked(impl_);
  if (impl_->data.size() != 1) {
    fail(Errc::contract, "backward() requires a scalar, got shape " + shape_str(impl_->shape));
  }
  if (impl_->consumed) {
    fail(Errc::accumulation, "graph was already differentiated; rebuild it before calling backward() again");
  }
  if (impl_->is_leaf()) {
    if (!impl_->requires_grad) fail(Errc::contract, "backward() on a tensor that does not require grad");
    if (!impl_->grad.empty()) fail(Errc::accumulation, "leaf already holds a gradient; call zero_grad() first");
    impl_->grad.assign(1, 1.0);
    return;
  }

  auto order = topo_order(impl_.get());
  // Owning handles for every node, so dropping parents below cannot free a
  // node that is still queued.
  std::vector<detail::ImplPtr> keep_alive;
  for (auto* node : order) {
    for (const auto& p : node->parents) {
      keep_alive.push_back(p);
      if (p->is_leaf() && p->requires_grad && !p->grad.empty()) {
        fail(Errc::accumulation, "leaf tensor " + std::to_string(p->id) +
                                     " already holds a gradient; call zero_grad() before backward()");
      }
    }
  }

  impl_->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorImpl* node = *it;
    if (!node->grad.empty()) node->backward(*node);
    for (const auto& p : node->parents) {
      if (p->is_leaf() && p->requires_grad && p->grad.empty()) p->grad.assign(p->data.size(), 0.0);
    }
    node->consumed = true;
    node->backward = nullptr;
    node->parents.clear();
    if (node != impl_.get()) node->grad.clear();
  }
}

std::vector<GraphNode> trace_graph(const Tensor& root) {
  std::vector<GraphNode> out;
  if (!root.defined() || root.is_leaf()) return out;
  for (auto* node : topo_order(root.impl().get())) {
    GraphNode g;
    g.op = node->op;
    g.output = node->id;
    for (const auto& p : node->parents) g.inputs.push_back(p->id);
    out.push_back(std::move(g));
  }
  return out;
}

NoGradGuard::NoGradGuard() : previous_(recording) { recording = false; }
NoGradGuard::~NoGradGuard() { recording = previous_; }

bool grad_mode_enabled() { return recording; }

Tensor detail::make_result(const char* op, Shape shape, std::vector<double> data,
                           std::vector<ImplPtr> parents, BackwardFn backward) {
  bool track = false;
  if (recording) {
    for (const auto& p : parents) track = track || p->requires_grad;
  }
  auto impl = new_impl(std::move(shape), std::move(data), track);
  if (track) {
    impl->op = op;
    impl->parents = std::move(parents);
    impl->backward = std::move(backward);
  }
  return Tensor::wrap(std::move(impl));
}

}  // namespace ssmae
