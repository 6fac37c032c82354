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

// Central finite-difference gradient checking for float64 graphs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "polarface/autograd/var.hpp"
#include "polarface/core/rng.hpp"

namespace polarface {

struct GradCheckResult {
  double max_relative_error = 0.0;  // worst over inputs
  std::vector<double> per_input;     // relative error of each input
  std::size_t checked = 0;
};

/// Compares analytic gradients of `fn` (which must return any tensor) with
/// central differences. The output is contracted with a fixed random
/// projection so every output element contributes. Relative error per input
/// is ||g_a - g_n||_2 / max(||g_a||_2, ||g_n||_2, floor); the floor keeps
/// inputs whose true gradient is zero (a bias ahead of batch norm, say) from
/// dividing finite-difference noise by itself.
inline GradCheckResult grad_check(
    const std::function<Var<double>(const std::vector<Var<double>>&)>& fn,
    const std::vector<Tensor<double>>& inputs, std::uint64_t seed = 7, double h = 1e-5,
    double floor = 1e-4) {
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(parameter(t));
  Var<double> out = fn(vars);

  Rng rng(seed);
  Tensor<double> proj(out->value.shape());
  for (std::size_t i = 0; i < proj.numel(); ++i) proj[i] = rng.uniform(-1.0, 1.0);
  auto contract = [&](const Tensor<double>& y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) acc += y[i] * proj[i];
    return acc;
  };

  backward_with(out, proj);

  GradCheckResult result;
  for (std::size_t a = 0; a < vars.size(); ++a) {
    const Tensor<double> analytic =
        vars[a]->has_grad() ? vars[a]->grad : Tensor<double>(inputs[a].shape());
    double diff2 = 0.0, an2 = 0.0, nu2 = 0.0;
    for (std::size_t i = 0; i < inputs[a].numel(); ++i) {
      auto eval_at = [&](double delta) {
        NoGradGuard guard;
        std::vector<Var<double>> probe;
        for (std::size_t b = 0; b < inputs.size(); ++b) {
          Tensor<double> t = inputs[b];
          if (b == a) t[i] += delta;
          probe.push_back(constant(std::move(t)));
        }
        return contract(fn(probe)->value);
      };
      const double numeric = (eval_at(h) - eval_at(-h)) / (2.0 * h);
      const double d = analytic[i] - numeric;
      diff2 += d * d;
      an2 += analytic[i] * analytic[i];
      nu2 += numeric * numeric;
      ++result.checked;
    }
    const double scale = std::max({std::sqrt(an2), std::sqrt(nu2), floor});
    const double err = std::sqrt(diff2) / scale;
    result.per_input.push_back(err);
    result.max_relative_error = std::max(result.max_relative_error, err);
  }
  return result;
}

}  // namespace polarface
