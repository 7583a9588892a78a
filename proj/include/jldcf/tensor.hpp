#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "jldcf/errors.hpp"

namespace jldcf {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream oss;
  oss << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) oss << (i ? "x" : "") << shape[i];
  oss << ']';
  return oss.str();
}

namespace detail {
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

/// Whether newly created op results record their inputs for backward.
inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// One vertex of the recorded computation graph. Leaves are created by the
/// user (inputs, parameters); interior nodes by ops.
template <class T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool leaf = true;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  std::vector<T>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

/// Dense N-d array with an optional gradient, shared by handle. Copies of a
/// Tensor alias the same storage; use `clone()` for a deep copy.
template <class T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<Node<T>>;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<Node<T>>()) {
    check_shape(shape);
    if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
      throw DimensionError("numel", "shape " + shape_string(shape) + " does not hold " +
                                        std::to_string(values.size()) + " values");
    }
    node_->shape = std::move(shape);
    node_->data = std::move(values);
  }

  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor full(Shape shape, T value) {
    check_shape(shape);
    auto n = static_cast<std::size_t>(shape_numel(shape));
    return Tensor(std::move(shape), std::vector<T>(n, value));
  }
  static Tensor zeros(Shape shape) { return full(std::move(shape), T(0)); }

  /// Leaf tensor that accumulates gradients.
  static Tensor parameter(Shape shape, std::vector<T> values) {
    Tensor t(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::int64_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->data.size()); }

  std::span<const T> data() const { return node_->data; }
  std::span<T> mutable_data() { return node_->data; }
  const std::vector<T>& vec() const { return node_->data; }

  T item() const {
    if (numel() != 1) throw DimensionError("numel", "item() on non-scalar " + shape_string(shape()));
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    node_->requires_grad = on;
    return *this;
  }
  bool is_leaf() const { return node_->leaf; }

  bool has_grad() const { return node_->grad.size() == node_->data.size() && !node_->data.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

  const std::string& op() const { return node_->op; }
  const NodePtr& node() const { return node_; }

  /// Deep copy of the values with no graph history.
  Tensor clone() const { return Tensor(shape(), node_->data); }

 private:
  static void check_shape(const Shape& shape) {
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (shape[i] <= 0) {
        throw DimensionError("axis " + std::to_string(i),
                             "extents must be positive, got " + shape_string(shape));
      }
    }
  }

  NodePtr node_;
};

/// Builds an op result. Inputs and the backward rule are recorded only when
/// grad mode is on and at least one input requires a gradient.
template <class T>
Tensor<T> make_result(std::string op, Shape shape, std::vector<T> data,
                      std::initializer_list<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward) {
  Tensor<T> out(std::move(shape), std::move(data));
  auto& node = *out.node();
  node.op = std::move(op);
  node.leaf = false;
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  node.requires_grad = true;
  for (const auto& in : inputs) node.inputs.push_back(in.node());
  node.backward_fn = std::move(backward);
  return out;
}

/// Same as above for a runtime-sized input list.
template <class T>
Tensor<T> make_result(std::string op, Shape shape, std::vector<T> data,
                      const std::vector<Tensor<T>>& inputs,
                      std::function<void(Node<T>&)> backward) {
  Tensor<T> out(std::move(shape), std::move(data));
  auto& node = *out.node();
  node.op = std::move(op);
  node.leaf = false;
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  node.requires_grad = true;
  for (const auto& in : inputs) node.inputs.push_back(in.node());
  node.backward_fn = std::move(backward);
  return out;
}

/// Nodes reachable from `root` in topological order (inputs before users).
template <class T>
std::vector<Node<T>*> topological_order(Node<T>* root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
/// calls; interior gradients are recomputed from zero on every call.
template <class T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw DimensionError("numel", "backward() needs a scalar loss, got " +
                                      (loss.defined() ? shape_string(loss.shape()) : "undefined"));
  }
  if (!loss.requires_grad()) return;
  auto order = topological_order(loss.node().get());
  for (Node<T>* node : order) {
    if (!node->leaf) std::fill(node->grad.begin(), node->grad.end(), T(0));
  }
  loss.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn && node->grad.size() == node->data.size()) node->backward_fn(*node);
  }
}

}  // namespace jldcf
