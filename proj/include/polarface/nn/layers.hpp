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

// Trainable blocks shared by the generators and discriminators.

#include <functional>
#include <optional>
#include <string>

#include "polarface/autograd/ops.hpp"
#include "polarface/core/rng.hpp"
#include "polarface/nn/spectral.hpp"

namespace polarface {

/// Walks named trainable parameters and persistent buffers (batch-norm
/// statistics, power-iteration vectors). Names are stable across runs.
template <typename T>
struct StateVisitor {
  std::function<void(const std::string&, Var<T>&)> param;
  std::function<void(const std::string&, Tensor<T>&)> buffer;
};

enum class Direction { kDown, kUp };
enum class Norm { kNone, kBatch, kSpectral };
enum class Activation { kNone, kRelu, kLeakyRelu, kTanh, kSigmoid };

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kInitStd = 0.02;

struct ConvBlockSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 0;
  Direction direction = Direction::kDown;
  Norm norm = Norm::kNone;
  Activation activation = Activation::kNone;

  /// Output spatial size for an input of size `in`.
  int out_size(int in) const;
};

template <typename T>
Var<T> activate(const Var<T>& x, Activation act);

/// Weight [out, in, k, k] (down) or [in, out, k, k] (up), bias [out], then an
/// optional norm and an activation.
template <typename T>
class ConvBlock {
 public:
  ConvBlock() = default;
  ConvBlock(const ConvBlockSpec& spec, Rng& rng);

  Var<T> forward(const Var<T>& x, bool training);
  void visit(const StateVisitor<T>& visitor, const std::string& prefix);

  const ConvBlockSpec& spec() const { return spec_; }
  Var<T>& weight() { return weight_; }
  Var<T>& bias() { return bias_; }
  SpectralState<T>& spectral_state() { return spectral_; }
  /// Weight the block applies at its next use, without updating any state.
  Tensor<T> effective_weight(int n_iter) const;
  /// Advances the power-iteration state by n_iter rounds (no-op without spectral norm).
  void warm_up_spectral(int n_iter);

  int power_iterations = 1;

 private:
  ConvBlockSpec spec_;
  Var<T> weight_, bias_;
  Var<T> gamma_, beta_;
  BatchNormStats<T> stats_;
  SpectralState<T> spectral_;
};

/// x + BN(conv(relu(BN(conv(x))))) with 3x3, stride 1, padding 1 convolutions.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(int channels, Rng& rng);

  Var<T> forward(const Var<T>& x, bool training);
  void visit(const StateVisitor<T>& visitor, const std::string& prefix);

  int channels() const { return first_.spec().in_channels; }
  ConvBlock<T>& first() { return first_; }
  ConvBlock<T>& second() { return second_; }

 private:
  ConvBlock<T> first_, second_;
};

enum class AttentionMode { kSagan, kLiteral };

const char* to_string(AttentionMode mode) noexcept;
AttentionMode parse_attention_mode(const std::string& name);

inline constexpr int kDefaultAttentionCap = 64 * 64;

template <typename T>
struct AttentionOutput {
  Var<T> output;
  /// sagan: [B, N, M] row-stochastic over key positions M.
  /// literal: [B, C, H, W] stochastic over channels at each position.
  /// Empty when the attention was computed in blocked inference form.
  Tensor<T> attention;
};

/// Self-attention over spatial positions (sagan) or elementwise channel
/// gating (literal). sagan: q, k have max(C/8, 1) channels, v has C, and
/// out = gamma * v A^T + x with gamma initialized to 0. When H*W exceeds
/// `cap`, keys and values come from a 2x average-pooled input. Without
/// gradient recording, large products are evaluated in row blocks and the
/// attention matrix is not materialized.
template <typename T>
class SelfAttention {
 public:
  SelfAttention() = default;
  /// `spectral` normalizes the three projection weights (discriminator use).
  SelfAttention(int channels, AttentionMode mode, Rng& rng, int cap = kDefaultAttentionCap,
                bool spectral = false);

  AttentionOutput<T> forward(const Var<T>& x, bool training = true, bool keep_attention = false);
  void visit(const StateVisitor<T>& visitor, const std::string& prefix);

  int channels() const { return channels_; }
  int key_channels() const { return key_channels_; }
  AttentionMode mode() const { return mode_; }
  int cap() const { return cap_; }
  void set_cap(int cap) { cap_ = cap; }
  Var<T>& gamma() { return gamma_; }
  bool spectral() const { return spectral_; }
  /// Normalized projection weights (query, key, value) as used at the next call.
  std::vector<Tensor<T>> effective_weights(int n_iter) const;
  void warm_up_spectral(int n_iter);

  int power_iterations = 1;
  Var<T> query_weight, query_bias, key_weight, key_bias, value_weight, value_bias;

 private:
  int channels_ = 0;
  int key_channels_ = 0;
  AttentionMode mode_ = AttentionMode::kSagan;
  int cap_ = kDefaultAttentionCap;
  bool spectral_ = false;
  Var<T> gamma_;
  SpectralState<T> sn_query_, sn_key_, sn_value_;

  Var<T> projection(const Var<T>& w, SpectralState<T>& state, bool training);
};

}  // namespace polarface
