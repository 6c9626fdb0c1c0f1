#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gnm/core/tensor.hpp"

namespace gnm {

// Reverse-mode autodiff on a dynamically built tape. A Var is a shared
// node holding a value, an optional gradient and a closure that pushes
// the node's gradient into its parents.
template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on demand during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backprop;

  Tensor<T>& grad_buffer() {
    if (!grad.defined()) grad = Tensor<T>::zeros(value.shape());
    return grad;
  }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

namespace detail {
template <class T>
inline thread_local bool grad_enabled_flag = true;
}

template <class T = float>
bool grad_enabled() {
  return detail::grad_enabled_flag<T>;
}

// RAII guard that disables tape construction (forward-only evaluation).
template <class T = float>
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled_flag<T>) { detail::grad_enabled_flag<T> = false; }
  ~NoGradGuard() { detail::grad_enabled_flag<T> = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <class T>
Var<T> make_leaf(Tensor<T> value, bool requires_grad) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

template <class T>
Var<T> constant(Tensor<T> value) {
  return make_leaf(std::move(value), false);
}

template <class T>
Var<T> constant_scalar(T v) {
  return make_leaf(Tensor<T>::scalar(v), false);
}

// Detached view of the value (shared storage, no history).
template <class T>
Var<T> detach(const Var<T>& v) {
  return constant(v->value);
}

template <class T>
bool any_requires_grad(const std::vector<Var<T>>& vs) {
  for (const auto& v : vs)
    if (v->requires_grad) return true;
  return false;
}

// Builds an op node. If gradients are globally disabled or no input
// needs them, the node is detached and the closure is dropped.
template <class T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backprop) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  if (grad_enabled<T>() && any_requires_grad(parents)) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

// Reverse topological order over the subgraph that requires grad.
template <class T>
std::vector<Node<T>*> topo_order(const Var<T>& root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // children appear after parents; iterate in reverse
}

// Accumulates gradients of a scalar root into every reachable leaf.
template <class T>
void backward(const Var<T>& root) {
  if (root->value.size() != 1) throw ShapeError("backward() root must be scalar");
  if (!root->requires_grad) return;
  auto order = topo_order(root);
  root->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backprop && n->grad.defined()) n->backprop(*n);
  }
}

template <class T>
void zero_grad(const Var<T>& v) {
  if (v->grad.defined()) v->grad.fill(T(0));
}

}  // namespace gnm
