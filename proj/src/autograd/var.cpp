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

#include "polarface/autograd/var.hpp"

#include <unordered_set>

namespace polarface {
namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
std::vector<Var<T>> topo_order(const Var<T>& root) {
  // Owning references: clearing a node's inputs must not free nodes that
  // are still pending in the order.
  std::vector<Var<T>> order;
  std::unordered_set<Node<T>*> visited;
  // Iterative post-order DFS; deep generators would overflow recursion.
  std::vector<std::pair<Var<T>, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      const Var<T>& child = node->inputs[next++];
      if (child && child->requires_grad && child->backward && !visited.count(child.get())) {
        visited.insert(child.get());
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
void backward_with(const Var<T>& root, const Tensor<T>& seed, bool retain_graph) {
  if (!root->requires_grad) return;
  require_same_shape(root->value.shape(), seed.shape(), "backward seed");
  auto& g = root->grad_buffer();
  for (std::size_t i = 0; i < g.numel(); ++i) g[i] += seed[i];
  if (!root->backward) return;

  NoGradGuard no_grad;
  auto order = topo_order(root);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = it->get();
    if (node->backward && !node->grad.empty()) node->backward(*node);
    if (!retain_graph) {
      node->backward = nullptr;
      node->inputs.clear();
      if (node != root.get()) node->grad = Tensor<T>();
    }
  }
}

template <typename T>
void backward(const Var<T>& root, bool retain_graph) {
  if (root->value.numel() != 1) {
    throw ShapeError("backward() needs a scalar root, got " + shape_string(root->value.shape()));
  }
  backward_with(root, Tensor<T>(root->value.shape(), T(1)), retain_graph);
}

template void backward<float>(const Var<float>&, bool);
template void backward<double>(const Var<double>&, bool);
template void backward_with<float>(const Var<float>&, const Tensor<float>&, bool);
template void backward_with<double>(const Var<double>&, const Tensor<double>&, bool);

}  // namespace polarface
