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

#include <cstdint>

#include "polarface/autograd/var.hpp"
#include "polarface/core/rng.hpp"

namespace polarface {

inline constexpr double kSpectralEps = 1e-12;

/// Power-iteration vectors for one weight viewed as rows x cols, where rows
/// is the output-channel count. Both vectors are unit-norm after any update.
template <typename T>
struct SpectralState {
  Tensor<T> u;  // [rows]
  Tensor<T> v;  // [cols]

  SpectralState() = default;
  SpectralState(int rows, int cols, Rng& rng);
};

/// Runs n_iter rounds of matrix-vector products (W v, then W^T u) from the
/// stored v and returns sigma = u^T W v for the updated pair. One round is
/// exactly the power step u <- normalize(W v), v <- normalize(W^T u); more
/// rounds take the best singular pair over all iterates (Golub-Kahan), which
/// converges where plain power iteration stalls on clustered spectra. If W v
/// vanishes the previous vectors are kept. n_iter == 0 only evaluates sigma.
template <typename T>
double power_iteration(const T* w, int rows, int cols, SpectralState<T>& state, int n_iter);

/// W / max(sigma, eps) with sigma from power_iteration on the [rows, rest]
/// view of w. The vectors are treated as constants for the gradient.
template <typename T>
Var<T> spectral_normalize(const Var<T>& w, SpectralState<T>& state, int n_iter);

/// Largest singular value estimate without touching the caller's state.
template <typename T>
double spectral_sigma(const Tensor<T>& w, const SpectralState<T>& state, int n_iter);

}  // namespace polarface
