// Copyright (c) 2026 The densedrop Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "densedrop/errors.hpp"
#include "densedrop/tensor.hpp"

namespace densedrop {

/// One vertex of the reverse-mode tape. Op nodes own their inputs, so the
/// graph stays alive exactly as long as the root handle does.
template <class T>
struct Node {
  std::string op;
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows in
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  /// Gradient buffer with the value's shape, zero-initialised on first use.
  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

/// Leaf holding data that no gradient flows into (inputs, masks).
template <class T>
Var<T> constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->op = "constant";
  n->value = std::move(value);
  return n;
}

/// Trainable leaf.
template <class T>
Var<T> leaf(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->op = "parameter";
  n->value = std::move(value);
  n->requires_grad = true;
  return n;
}

/// Creates an op node. `fn` is dropped when no input needs a gradient so
/// inference builds no tape.
template <class T>
Var<T> make_node(std::string op, Tensor<T> value, std::vector<Var<T>> inputs,
                 std::function<void(Node<T>&)> fn) {
  if (!value.all_finite()) throw NumericError(op + ": produced a non-finite value");
  auto n = std::make_shared<Node<T>>();
  n->op = std::move(op);
  n->value = std::move(value);
  for (const auto& in : inputs) n->requires_grad = n->requires_grad || in->requires_grad;
  if (n->requires_grad) {
    n->inputs = std::move(inputs);
    n->backward_fn = std::move(fn);
  }
  return n;
}

/// Named trainable tensor.
template <class T>
struct Parameter {
  std::string name;
  Var<T> var;
  bool weight_decay = true;  // false for BN gamma/beta and biases

  Tensor<T>& value() { return var->value; }
  const Tensor<T>& value() const { return var->value; }
};

template <class T>
using ParameterList = std::vector<Parameter<T>>;

/// Gradients aligned index-for-index with the parameter list they were
/// requested for.
template <class T>
using GradientMap = std::vector<Tensor<T>>;

namespace detail {

template <class T>
std::vector<Node<T>*> topological_order(Node<T>* root) {
  enum class Mark : unsigned char { Open, Done };
  std::unordered_map<Node<T>*, Mark> marks;
  std::vector<Node<T>*> order;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
  marks[root] = Mark::Open;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (!child->requires_grad) continue;
      auto it = marks.find(child);
      if (it == marks.end()) {
        marks[child] = Mark::Open;
        stack.emplace_back(child, 0);
      } else if (it->second == Mark::Open) {
        throw UsageError("backward: computation graph contains a cycle at op '" + child->op + "'");
      }
    } else {
      marks[node] = Mark::Done;
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // inputs before consumers
}

}  // namespace detail

/// Reverse-mode sweep from a scalar loss. Every listed parameter receives a
/// gradient; parameters the loss does not reach get zeros.
template <class T>
GradientMap<T> backward(const Var<T>& loss, const ParameterList<T>& params) {
  if (!loss || loss->value.size() != 1)
    throw UsageError("backward: root must be a scalar, got shape " +
                     (loss ? to_string(loss->value.shape()) : std::string("<null>")));
  for (const auto& p : params) p.var->grad = Tensor<T>();

  GradientMap<T> grads;
  grads.reserve(params.size());
  if (loss->requires_grad) {
    auto order = detail::topological_order(loss.get());
    loss->grad = Tensor<T>(loss->value.shape(), T{1});
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>& n = **it;
      if (n.backward_fn && !n.grad.empty()) {
        n.backward_fn(n);
        n.grad = Tensor<T>();
      }
    }
  }
  for (const auto& p : params) {
    if (p.var->grad.empty())
      grads.emplace_back(p.var->value.shape());
    else
      grads.push_back(std::move(p.var->grad));
    p.var->grad = Tensor<T>();
  }
  return grads;
}

}  // namespace densedrop
