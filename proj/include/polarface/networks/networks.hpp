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

// The two generators and two discriminators of the translation model.
//
// Generator (widths at base_channels = 64):
//   CBR(64) k7 s1 p3 - CBR(128) - CBR(256) - Res(256) x5 - DBL(128) - DBL(64)
//   - SA(64) - CT(3) k7 s1 p3 + tanh
// with C = conv k4 s2 p1, D = transposed conv k4 s2 p1, B = batch norm, R = relu,
// L = leaky relu 0.2. The k7 stride-1 stem keeps the model size preserving;
// StemPolicy::kLiteral uses a k4 s2 stem instead and halves the output size.
//
// Discriminator:
//   CLSn(64) - CLSn(128) - CLSn(256) - CLSn(512) - CLSn(512) - SA(512) - CS(1)
// with every convolution (attention projections included) spectrally
// normalized; CS is k4 s1 p1 followed by a sigmoid. A 224 input yields a 6x6
// patch map and 64 yields 1x1.

#include <cstdint>
#include <string>
#include <vector>

#include "polarface/nn/layers.hpp"

namespace polarface {

enum class StemPolicy { kStem7, kLiteral };
enum class NetworkKind { kGenerator, kDiscriminator };

const char* to_string(StemPolicy policy) noexcept;
StemPolicy parse_stem_policy(const std::string& name);

inline constexpr int kSpectralWarmupIterations = 30;
inline constexpr int kResidualBlocks = 5;

struct NetworkConfig {
  int image_size = 224;
  int image_channels = 3;
  AttentionMode attention = AttentionMode::kSagan;
  StemPolicy stem = StemPolicy::kStem7;
  std::uint64_t seed = 0;
  /// Width of the first block; every layer scales with it (64 is the
  /// reference architecture).
  int base_channels = 64;
  int attention_cap = kDefaultAttentionCap;

  /// Throws ConfigError for an unusable geometry.
  void validate(NetworkKind kind) const;
};

struct ParameterInfo {
  std::string name;
  Shape shape;
};

class Generator {
 public:
  Generator(const NetworkConfig& config, std::uint64_t seed);

  /// x: [B, 3, S, S] with S = image_size. Output values lie in [-1, 1].
  Var<float> forward(const Var<float>& x, bool training,
                     AttentionOutput<float>* attention = nullptr);
  void visit(const StateVisitor<float>& visitor, const std::string& prefix = "");
  std::vector<ParameterInfo> census();

  const NetworkConfig& config() const { return config_; }
  std::vector<ConvBlock<float>>& encoder() { return encoder_; }
  std::vector<ResidualBlock<float>>& residuals() { return residuals_; }
  std::vector<ConvBlock<float>>& decoder() { return decoder_; }
  SelfAttention<float>& attention() { return attention_; }
  ConvBlock<float>& output_block() { return output_; }

 private:
  NetworkConfig config_;
  std::vector<ConvBlock<float>> encoder_;
  std::vector<ResidualBlock<float>> residuals_;
  std::vector<ConvBlock<float>> decoder_;
  SelfAttention<float> attention_;
  ConvBlock<float> output_;
};

struct NamedWeight {
  std::string name;
  Tensor<float> weight;
};

class Discriminator {
 public:
  Discriminator(const NetworkConfig& config, std::uint64_t seed);

  /// Patch probabilities [B, 1, P, P], every entry in (0, 1).
  Var<float> forward(const Var<float>& x, bool training,
                     AttentionOutput<float>* attention = nullptr);
  void visit(const StateVisitor<float>& visitor, const std::string& prefix = "");
  std::vector<ParameterInfo> census();

  /// Every spectrally normalized weight as the next forward pass would use
  /// it, without mutating the power-iteration state.
  std::vector<NamedWeight> normalized_weights(int n_iter = 1) const;
  int patch_size() const;

  const NetworkConfig& config() const { return config_; }
  std::vector<ConvBlock<float>>& blocks() { return blocks_; }
  SelfAttention<float>& attention() { return attention_; }
  ConvBlock<float>& output_block() { return output_; }

 private:
  NetworkConfig config_;
  std::vector<ConvBlock<float>> blocks_;
  SelfAttention<float> attention_;
  ConvBlock<float> output_;
};

/// Names every trainable parameter in visit order.
template <typename Net>
std::vector<Var<float>*> collect_parameters(Net& net) {
  std::vector<Var<float>*> out;
  StateVisitor<float> v;
  v.param = [&](const std::string&, Var<float>& p) { out.push_back(&p); };
  net.visit(v);
  return out;
}

/// 8-bit grayscale PNG of an attention map for one batch element: rows are
/// query positions (sagan) or spatial positions (literal), each row scaled
/// so its maximum maps to 255.
std::vector<std::uint8_t> attention_heatmap_png(const Tensor<float>& attention, int batch_index);

}  // namespace polarface
