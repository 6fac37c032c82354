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

// Differentiable tensor operations. All feature maps are NCHW. Functions are
// defined for float and double.

#include "polarface/autograd/var.hpp"

namespace polarface {

// --- elementwise and reductions -------------------------------------------

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
/// a * s where s holds a single element (e.g. an attention gate).
template <typename T> Var<T> scale_by(const Var<T>& a, const Var<T>& s);
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
/// mean |a - b| over all elements.
template <typename T> Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b);

/// mean(-log p), mean(-log(1 - p)) and mean(log(1 - p)) on probabilities.
/// Inputs outside [0, 1] (or non-finite) raise DomainError; values are
/// clamped to [eps, 1 - eps] before the logarithm.
template <typename T> Var<T> mean_neg_log(const Var<T>& p, T eps);
template <typename T> Var<T> mean_neg_log1m(const Var<T>& p, T eps);
template <typename T> Var<T> mean_log1m(const Var<T>& p, T eps);

template <typename T> Var<T> relu(const Var<T>& x);
template <typename T> Var<T> leaky_relu(const Var<T>& x, T slope);
template <typename T> Var<T> tanh(const Var<T>& x);
template <typename T> Var<T> sigmoid(const Var<T>& x);

template <typename T> Var<T> reshape(const Var<T>& x, Shape shape);

// --- convolution ------------------------------------------------------------

inline int conv_out_size(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}
inline int conv_transpose_out_size(int in, int kernel, int stride, int pad) {
  return (in - 1) * stride - 2 * pad + kernel;
}

/// x [B,C,H,W], w [O,C,k,k], bias [O] or null.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride, int pad);

/// x [B,C,H,W], w [C,O,k,k] (transposed-convolution layout), bias [O] or null.
template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, int stride,
                        int pad);

// --- normalization and pooling ---------------------------------------------

template <typename T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  explicit BatchNormStats(int channels = 0)
      : running_mean(Shape{channels}, T(0)), running_var(Shape{channels}, T(1)) {}
};

/// Training mode normalizes with biased batch statistics and updates the
/// running averages (unbiased variance); evaluation mode uses the averages.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                  BatchNormStats<T>& stats, bool training, T momentum, T eps);

/// Non-overlapping k x k average pooling; H and W must be multiples of k.
template <typename T> Var<T> avg_pool2d(const Var<T>& x, int k);

/// Average pooling onto an out_h x out_w grid with floor/ceil bin edges.
template <typename T> Var<T> adaptive_avg_pool2d(const Var<T>& x, int out_h, int out_w);

/// x [B,F], w [O,F], bias [O] -> [B,O].
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& bias);

// --- attention products -------------------------------------------------------

/// softmax over j of <q_i, k_j>: q [B,d,N], k [B,d,M] -> [B,N,M].
template <typename T> Var<T> attention_weights(const Var<T>& q, const Var<T>& k);

/// o_i = sum_j a_ij v_j: v [B,C,M], a [B,N,M] -> [B,C,N].
template <typename T> Var<T> attend(const Var<T>& v, const Var<T>& a);

/// attend(v, attention_weights(q, k)) computed in row blocks without
/// materializing the full attention matrix. Not differentiable.
template <typename T>
Tensor<T> attention_rows_blocked(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                 int block_rows = 256);

/// Softmax across the channel axis at every spatial position.
template <typename T> Var<T> softmax_channels(const Var<T>& x);

}  // namespace polarface
