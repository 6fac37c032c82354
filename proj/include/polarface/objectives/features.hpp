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

// Frozen feature extractors supplying the perceptual (mid), identity (deep)
// and verification (embedding) features.
//
// ConvStackExtractor is a VGG-style stack: blocks of 3x3 conv + relu with a
// 2x average-pool between blocks, then an adaptive average pool to
// fc_grid x fc_grid, fc6 (+ relu) and fc7. Taps for an S x S input with the
// default spec:
//   mid        [B, 32, S/2, S/2]   last conv of block 2
//   deep       [B, 64, S/8, S/8]   last conv of block 4
//   embedding  [B, 128]            fc7, no activation
// (odd sizes pool with floor/ceil bins, so S/2 rounds down).

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "polarface/autograd/ops.hpp"
#include "polarface/core/rng.hpp"

namespace polarface {

struct Archive;

enum class FeatureTap { kMid, kDeep, kEmbedding };

const char* to_string(FeatureTap tap) noexcept;

template <typename T>
struct FeatureSet {
  Var<T> mid, deep, embedding;  // null unless requested
};

template <typename T>
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string identifier() const = 0;
  virtual bool has_tap(FeatureTap tap) const = 0;
  /// Differentiable with respect to x; evaluation stops at the deepest
  /// requested tap.
  virtual FeatureSet<T> extract(const Var<T>& x, bool mid, bool deep, bool embedding) const = 0;

  Var<T> tap(const Var<T>& x, FeatureTap which) const;
};

struct ConvStackSpec {
  std::vector<std::vector<int>> blocks = {{16, 16}, {32, 32}, {64}, {64, 64}};
  int mid_block = 1;
  int deep_block = 3;
  int fc_grid = 4;
  int fc6 = 256;
  int fc7 = 128;

  void validate() const;
};

template <typename T>
class ConvStackExtractor final : public FeatureExtractor<T> {
 public:
  /// He-normal weights from the given seed, zero biases.
  ConvStackExtractor(const ConvStackSpec& spec, std::uint64_t seed);
  /// Weights named convB_L.weight / .bias (1-based) and fc6/fc7; the
  /// manifest carries the spec.
  explicit ConvStackExtractor(const Archive& archive);

  std::string identifier() const override { return identifier_; }
  bool has_tap(FeatureTap) const override { return true; }
  FeatureSet<T> extract(const Var<T>& x, bool mid, bool deep, bool embedding) const override;

  const ConvStackSpec& spec() const { return spec_; }
  /// Archive with the same layout the loading constructor reads.
  Archive to_archive() const;

 private:
  struct Conv {
    std::string name;
    Var<T> weight, bias;
  };
  void allocate();

  ConvStackSpec spec_;
  std::string identifier_;
  std::vector<std::vector<Conv>> convs_;
  Conv fc6_, fc7_;
};

/// Every tap is the input itself (embedding flattened); turns the feature
/// losses into pixel L1 and verification into pixel cosine matching.
template <typename T>
class PixelExtractor final : public FeatureExtractor<T> {
 public:
  std::string identifier() const override { return "pixel"; }
  bool has_tap(FeatureTap) const override { return true; }
  FeatureSet<T> extract(const Var<T>& x, bool mid, bool deep, bool embedding) const override;
};

/// L_P = mean|F_mid(x_hat) - F_mid(x)|, L_I = mean|F_deep(x_hat) - F_deep(x)|.
/// ConfigError when the extractor lacks a tap.
template <typename T>
std::pair<Var<T>, Var<T>> feature_losses(const FeatureExtractor<T>& extractor, const Var<T>& x_hat,
                                         const Var<T>& x);

struct ExtractorConfig {
  /// "random" (ConvStackExtractor from seed), "pixel", or "archive".
  std::string kind = "random";
  std::uint64_t seed = 0x5646;
  std::string path;
};

std::unique_ptr<FeatureExtractor<float>> make_extractor(const ExtractorConfig& config);

}  // namespace polarface
