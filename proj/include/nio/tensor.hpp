// Reverse-mode autodiff tensor. A Tensor is a shared handle to a graph node
// holding a row-major value buffer, an optional gradient buffer, and a backward
// closure that scatters this node's gradient into its parents. Gradients
// accumulate additively across backward() calls until zero_grad().
#pragma once

#include <functional>
#include <memory>
#include <numeric>
#include <unordered_set>
#include <vector>

#include "nio/common.hpp"

namespace nio {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError(msg("negative dim ", d));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + ")";
}

// global (per-thread) switch: when false, ops record no graph
inline bool& grad_enabled() {
  thread_local bool on = true;
  return on;
}

struct NoGrad {
  bool prev;
  NoGrad() : prev(grad_enabled()) { grad_enabled() = false; }
  ~NoGrad() { grad_enabled() = prev; }
};

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until needed
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <class T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.n_ = std::make_shared<Node<T>>();
    t.n_->shape = std::move(shape);
    t.n_->value.assign(shape_numel(t.n_->shape), T(0));
    t.n_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (shape_numel(shape) != data.size())
      throw ShapeError(msg("tensor ", shape_str(shape), " vs ", data.size(), " values"));
    Tensor t;
    t.n_ = std::make_shared<Node<T>>();
    t.n_->shape = std::move(shape);
    t.n_->value = std::move(data);
    t.n_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(T v) { return from({1}, {v}); }

  bool defined() const { return static_cast<bool>(n_); }
  const Shape& shape() const { return node().shape; }
  int dim(int i) const { return node().shape.at(static_cast<std::size_t>(i)); }
  int ndim() const { return static_cast<int>(node().shape.size()); }
  std::size_t size() const { return node().value.size(); }

  std::vector<T>& data() { return node().value; }
  const std::vector<T>& data() const { return node().value; }
  T item() const {
    if (size() != 1) throw ShapeError(msg("item() on tensor ", shape_str(shape())));
    return node().value[0];
  }

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool b) { node().requires_grad = b; }

  std::vector<T>& grad() {
    node().ensure_grad();
    return node().grad;
  }

  void zero_grad() {
    if (!node().grad.empty()) std::fill(node().grad.begin(), node().grad.end(), T(0));
  }

  // Reverse sweep from a scalar root; seeds d(root)/d(root)=1. Interior op
  // nodes get fresh gradient scratch each sweep; only leaves (parameters,
  // inputs) accumulate across calls until zero_grad().
  void backward() {
    Node<T>& root = node();
    if (root.value.size() != 1) throw ShapeError("backward() needs a scalar root");
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    topo(&root, seen, order);
    for (Node<T>* nd : order) {
      if (nd->backward_fn) {
        nd->ensure_grad();
        std::fill(nd->grad.begin(), nd->grad.end(), T(0));
      } else {
        nd->ensure_grad();
      }
    }
    root.grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* nd = *it;
      if (nd->backward_fn && nd->requires_grad) nd->backward_fn(*nd);
    }
  }

  // graph plumbing for op implementations
  std::shared_ptr<Node<T>> node_ptr() const { return n_; }
  Node<T>& node() {
    if (!n_) throw Error("undefined tensor");
    return *n_;
  }
  const Node<T>& node() const {
    if (!n_) throw Error("undefined tensor");
    return *n_;
  }

  // deep value copy; detached from any graph
  Tensor clone_detached() const {
    Tensor t = Tensor::from(shape(), data());
    return t;
  }

 private:
  static void topo(Node<T>* nd, std::unordered_set<Node<T>*>& seen,
                   std::vector<Node<T>*>& order) {
    // iterative DFS post-order (graphs can be deep)
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{nd, 0}};
    seen.insert(nd);
    while (!stack.empty()) {
      auto& [cur, idx] = stack.back();
      if (idx < cur->parents.size()) {
        Node<T>* p = cur->parents[idx++].get();
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        order.push_back(cur);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node<T>> n_;
};

// Build an op result node. parents' requires_grad decides whether the backward
// closure is attached; with grad disabled the result is a detached constant.
template <class T>
Tensor<T> make_op(Shape shape, std::vector<T> value, std::vector<Tensor<T>> parents,
                  std::function<void(Node<T>&)> backward_fn) {
  Tensor<T> out = Tensor<T>::from(std::move(shape), std::move(value));
  bool need = false;
  if (grad_enabled()) {
    for (const auto& p : parents)
      if (p.requires_grad()) need = true;
  }
  if (need) {
    out.node().requires_grad = true;
    for (auto& p : parents) out.node().parents.push_back(p.node_ptr());
    out.node().backward_fn = std::move(backward_fn);
  }
  return out;
}

}  // namespace nio
