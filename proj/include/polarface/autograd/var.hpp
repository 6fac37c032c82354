// Copyright 2026 The polarface Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Minimal reverse-mode automatic differentiation over Tensor values.
//
// Every op returns a Var (shared graph node). When gradient recording is on
// and at least one input requires a gradient, the node keeps its inputs and
// a backward closure; otherwise it is a plain value. backward() walks the
// graph in reverse topological order and frees it unless asked to retain.

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "polarface/core/tensor.hpp"

namespace polarface {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  bool has_grad() const noexcept { return !grad.empty() || value.empty(); }

  /// Gradient storage, allocated as zeros on first use.
  Tensor<T>& grad_buffer() {
    if (grad.numel() != value.numel() || grad.shape() != value.shape()) {
      grad = Tensor<T>(value.shape());
    }
    return grad;
  }

  void zero_grad() { grad = Tensor<T>(); }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

bool grad_enabled() noexcept;

/// Disables graph recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
Var<T> constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return node;
}

template <typename T>
Var<T> parameter(Tensor<T> value) {
  auto node = constant(std::move(value));
  node->requires_grad = true;
  return node;
}

/// Wraps an op result. The backward closure receives the result node and
/// must accumulate into the gradient buffers of inputs that require grad.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs,
                   std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (!grad_enabled()) return node;
  bool any = false;
  for (const auto& in : inputs) any = any || (in && in->requires_grad);
  if (!any) return node;
  node->requires_grad = true;
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  return node;
}

/// New leaf holding a copy of the value; gradients do not flow through it.
template <typename T>
Var<T> detach(const Var<T>& v) {
  return constant(v->value);
}

/// Backpropagates from a scalar root (seed gradient 1).
template <typename T>
void backward(const Var<T>& root, bool retain_graph = false);

/// Backpropagates from an arbitrary root with the given output gradient.
template <typename T>
void backward_with(const Var<T>& root, const Tensor<T>& seed, bool retain_graph = false);

}  // namespace polarface
