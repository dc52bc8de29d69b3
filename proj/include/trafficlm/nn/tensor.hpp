#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "trafficlm/error.hpp"

namespace trafficlm::nn {

/// Graph node behind a Tensor handle. Gradients are allocated on first use.
template <typename T>
struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

/// Shared handle to a row-major rows x cols matrix participating in
/// reverse-mode differentiation. Copies alias the same node.
template <typename T = double>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(std::size_t rows, std::size_t cols) { return constant(rows, cols, std::vector<T>(rows * cols, T(0))); }

  static Tensor constant(std::size_t rows, std::size_t cols, std::vector<T> values) {
    if (values.size() != rows * cols) throw Error(ErrorCode::ShapeMismatch, "value count does not match shape");
    auto n = std::make_shared<Node<T>>();
    n->rows = rows;
    n->cols = cols;
    n->value = std::move(values);
    return Tensor(std::move(n));
  }

  /// Trainable leaf.
  static Tensor parameter(std::size_t rows, std::size_t cols, std::vector<T> values) {
    Tensor t = constant(rows, cols, std::move(values));
    t.node_->requires_grad = true;
    return t;
  }

  bool defined() const { return static_cast<bool>(node_); }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  std::array<std::size_t, 2> shape() const { return {node_->rows, node_->cols}; }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  T operator()(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }
  T item() const {
    if (size() != 1) throw Error(ErrorCode::ShapeMismatch, "item() on a non-scalar tensor");
    return node_->value[0];
  }

  /// Gradient accumulated by backward(); empty span if none was produced.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }

  /// Back-propagates from this scalar, accumulating into every reachable
  /// node that requires a gradient.
  void backward() const {
    if (size() != 1) throw Error(ErrorCode::ShapeMismatch, "backward() needs a scalar");
    if (!node_->requires_grad) return;
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, i] = stack.back();
      if (i < n->parents.size()) {
        Node<T>* p = n->parents[i++].get();
        if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

/// Result node wired to its parents only when some parent needs a gradient.
template <typename T>
Tensor<T> make_result(std::size_t rows, std::size_t cols, std::initializer_list<Tensor<T>> parents) {
  auto n = std::make_shared<Node<T>>();
  n->rows = rows;
  n->cols = cols;
  n->value.assign(rows * cols, T(0));
  for (const auto& p : parents) {
    if (p.requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) {
    for (const auto& p : parents) n->parents.push_back(p.ptr());
  }
  return Tensor<T>(std::move(n));
}

template <typename T>
Tensor<T> make_result(std::size_t rows, std::size_t cols, const std::vector<Tensor<T>>& parents) {
  auto n = std::make_shared<Node<T>>();
  n->rows = rows;
  n->cols = cols;
  n->value.assign(rows * cols, T(0));
  for (const auto& p : parents) {
    if (p.requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) {
    for (const auto& p : parents) n->parents.push_back(p.ptr());
  }
  return Tensor<T>(std::move(n));
}

/// Gradient buffer of a parent, or nullptr when it does not need one.
template <typename T>
T* grad_of(Node<T>& self, std::size_t i) {
  Node<T>& p = *self.parents[i];
  return p.requires_grad ? p.ensure_grad().data() : nullptr;
}

}  // namespace detail

}  // namespace trafficlm::nn
