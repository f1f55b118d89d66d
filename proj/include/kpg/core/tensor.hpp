#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "kpg/core/errors.hpp"

namespace kpg {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream oss;
  oss << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) oss << 'x';
    oss << shape[i];
  }
  oss << ']';
  return oss.str();
}

// Thread-local switch that suppresses tape recording (inference, optimizer
// updates, finite-difference probes).
class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set_enabled(bool on) { flag() = on; }

 private:
  static bool& flag() {
    thread_local bool on = true;
    return on;
  }
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until something flows into this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents.
  std::function<void(const Node&)> backward_fn;
};

template <typename T>
std::vector<T>& grad_buffer(Node<T>& node) {
  if (node.grad.empty()) node.grad.assign(node.data.size(), T(0));
  return node.grad;
}

}  // namespace detail

// Dense row-major array with an optional reverse-mode tape node.
//
// Tensor is a handle: copies share storage and tape identity, clone() makes
// an independent leaf.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : node_(std::make_shared<detail::Node<T>>()) {
    validate_shape(shape);
    node_->data.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
  }

  Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<detail::Node<T>>()) {
    validate_shape(shape);
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    }
    node_->shape = std::move(shape);
    node_->data = std::move(values);
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
  static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node().shape; }
  std::size_t rank() const { return node().shape.size(); }
  std::size_t dim(std::size_t axis) const {
    if (axis >= rank()) throw ShapeError("axis out of range for " + shape_str(shape()));
    return node().shape[axis];
  }
  std::size_t numel() const { return node().data.size(); }

  std::span<const T> data() const { return node().data; }
  std::span<T> mutable_data() { return node().data; }
  T operator[](std::size_t i) const { return node().data[i]; }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape()));
    return node().data[0];
  }

  bool requires_grad() const { return node().requires_grad; }
  Tensor& set_requires_grad(bool on) {
    node().requires_grad = on;
    return *this;
  }

  bool has_grad() const { return !node().grad.empty(); }
  std::span<const T> grad() const { return node().grad; }
  void zero_grad() { node().grad.clear(); }

  bool all_finite() const {
    return std::all_of(node().data.begin(), node().data.end(),
                       [](T v) { return std::isfinite(v); });
  }

  // Independent leaf with copied values and no grad.
  Tensor clone() const { return Tensor(shape(), std::vector<T>(data().begin(), data().end())); }

  // Same values, cut from the tape.
  Tensor detach() const { return clone(); }

  const NodePtr& node_ptr() const { return node_; }

  // Creates the output of a differentiable op. The tape entry is recorded only
  // when grad mode is on and at least one input requires grad.
  static Tensor make_result(Shape shape, std::vector<T> values,
                            std::initializer_list<Tensor> inputs,
                            std::function<void(const detail::Node<T>&)> backward_fn) {
    Tensor out(std::move(shape), std::move(values));
    if (!GradMode::enabled()) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    for (const auto& in : inputs) out.node_->parents.push_back(in.node_);
    out.node_->backward_fn = std::move(backward_fn);
    return out;
  }

 private:
  static void validate_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
    for (auto e : shape) {
      if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
  }

  detail::Node<T>& node() const {
    if (!node_) throw ContractError("use of an undefined tensor");
    return *node_;
  }

  NodePtr node_;
};

// Reverse-mode accumulation from a scalar loss into every tensor on its tape
// that requires grad. The consumed tape is released afterwards.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() requires a scalar loss");
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward() loss is not on a recorded computation graph");
  }
  using Node = detail::Node<T>;

  // `order` owns the nodes so that releasing the tape below cannot free a
  // node that is still waiting for its turn.
  std::vector<std::shared_ptr<Node>> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack{{loss.node_ptr(), 0}};
  visited.insert(loss.node_ptr().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto parent = node->parents[next++];
      if (parent->requires_grad && visited.insert(parent.get()).second) stack.push_back({std::move(parent), 0});
    } else {
      order.push_back(std::move(node));
      stack.pop_back();
    }
  }

  detail::grad_buffer(*loss.node_ptr())[0] += T(1);
  NoGradGuard no_grad;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& node = **it;
    if (node.backward_fn && !node.grad.empty()) node.backward_fn(node);
    node.backward_fn = nullptr;
    node.parents.clear();
  }
}

// Adds a gradient contribution to input `index` of an op node.
template <typename T>
std::vector<T>* parent_grad(const detail::Node<T>& node, std::size_t index) {
  auto& parent = *node.parents.at(index);
  if (!parent.requires_grad) return nullptr;
  return &detail::grad_buffer(parent);
}

}  // namespace kpg
