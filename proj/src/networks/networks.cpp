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

#include "polarface/networks/networks.hpp"

#include <algorithm>

#include "polarface/core/error.hpp"
#include "polarface/data/png.hpp"

namespace polarface {
namespace {

constexpr std::uint64_t kGeneratorStream = 0x47454e;
constexpr std::uint64_t kDiscriminatorStream = 0x444953;

void require_input(const Var<float>& x, const NetworkConfig& config, const char* what) {
  const Shape& s = x->value.shape();
  if (s.size() != 4 || s[1] != config.image_channels || s[2] != config.image_size ||
      s[3] != config.image_size) {
    throw ShapeError(std::string(what) + " expects [B, " + std::to_string(config.image_channels) +
                     ", " + std::to_string(config.image_size) + ", " +
                     std::to_string(config.image_size) + "], got " + shape_string(s));
  }
}

template <typename Net>
std::vector<ParameterInfo> census_of(Net& net) {
  std::vector<ParameterInfo> out;
  StateVisitor<float> v;
  v.param = [&](const std::string& name, Var<float>& p) { out.push_back({name, p->value.shape()}); };
  net.visit(v);
  return out;
}

}  // namespace

const char* to_string(StemPolicy policy) noexcept {
  return policy == StemPolicy::kStem7 ? "stem7" : "literal";
}

StemPolicy parse_stem_policy(const std::string& name) {
  if (name == "stem7") return StemPolicy::kStem7;
  if (name == "literal") return StemPolicy::kLiteral;
  throw ConfigError("unknown stem policy '" + name + "' (expected stem7 or literal)");
}

void NetworkConfig::validate(NetworkKind kind) const {
  if (image_size <= 0 || image_size % 4 != 0) {
    throw ConfigError("image_size must be a positive multiple of 4, got " +
                      std::to_string(image_size));
  }
  if (image_channels != 3) throw ConfigError("networks take 3-channel images");
  if (base_channels < 1) throw ConfigError("base_channels must be positive");
  if (attention_cap < 1) throw ConfigError("attention_cap must be positive");
  if (kind == NetworkKind::kDiscriminator && image_size < 64) {
    throw ConfigError("the discriminator needs image_size >= 64, got " +
                      std::to_string(image_size));
  }
}

// --- Generator -------------------------------------------------------------------

Generator::Generator(const NetworkConfig& config, std::uint64_t seed) : config_(config) {
  config.validate(NetworkKind::kGenerator);
  Rng rng(derive_seed(seed, kGeneratorStream));
  const int b = config.base_channels;
  const int c = config.image_channels;
  const auto cbr = [](int in, int out, int k, int s, int p) {
    return ConvBlockSpec{in, out, k, s, p, Direction::kDown, Norm::kBatch, Activation::kRelu};
  };
  if (config.stem == StemPolicy::kStem7) {
    encoder_.emplace_back(cbr(c, b, 7, 1, 3), rng);
  } else {
    encoder_.emplace_back(cbr(c, b, 4, 2, 1), rng);
  }
  encoder_.emplace_back(cbr(b, 2 * b, 4, 2, 1), rng);
  encoder_.emplace_back(cbr(2 * b, 4 * b, 4, 2, 1), rng);
  for (int i = 0; i < kResidualBlocks; ++i) residuals_.emplace_back(4 * b, rng);
  const auto dbl = [](int in, int out) {
    return ConvBlockSpec{in, out, 4, 2, 1, Direction::kUp, Norm::kBatch, Activation::kLeakyRelu};
  };
  decoder_.emplace_back(dbl(4 * b, 2 * b), rng);
  decoder_.emplace_back(dbl(2 * b, b), rng);
  attention_ = SelfAttention<float>(b, config.attention, rng, config.attention_cap);
  output_ = ConvBlock<float>({b, c, 7, 1, 3, Direction::kDown, Norm::kNone, Activation::kTanh}, rng);
}

Var<float> Generator::forward(const Var<float>& x, bool training,
                              AttentionOutput<float>* attention) {
  require_input(x, config_, "generator");
  Var<float> h = x;
  for (auto& block : encoder_) h = block.forward(h, training);
  for (auto& block : residuals_) h = block.forward(h, training);
  for (auto& block : decoder_) h = block.forward(h, training);
  AttentionOutput<float> att = attention_.forward(h, training, attention != nullptr);
  Var<float> y = output_.forward(att.output, training);
  if (attention) *attention = std::move(att);
  return y;
}

void Generator::visit(const StateVisitor<float>& visitor, const std::string& prefix) {
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    encoder_[i].visit(visitor, prefix + "enc" + std::to_string(i) + ".");
  }
  for (std::size_t i = 0; i < residuals_.size(); ++i) {
    residuals_[i].visit(visitor, prefix + "res" + std::to_string(i) + ".");
  }
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    decoder_[i].visit(visitor, prefix + "dec" + std::to_string(i) + ".");
  }
  attention_.visit(visitor, prefix + "attn.");
  output_.visit(visitor, prefix + "out.");
}

std::vector<ParameterInfo> Generator::census() { return census_of(*this); }

// --- Discriminator -----------------------------------------------------------------

Discriminator::Discriminator(const NetworkConfig& config, std::uint64_t seed) : config_(config) {
  config.validate(NetworkKind::kDiscriminator);
  Rng rng(derive_seed(seed, kDiscriminatorStream));
  const int b = config.base_channels;
  const int widths[] = {b, 2 * b, 4 * b, 8 * b, 8 * b};
  int in = config.image_channels;
  for (int w : widths) {
    blocks_.emplace_back(
        ConvBlockSpec{in, w, 4, 2, 1, Direction::kDown, Norm::kSpectral, Activation::kLeakyRelu},
        rng);
    in = w;
  }
  attention_ = SelfAttention<float>(in, config.attention, rng, config.attention_cap, true);
  output_ = ConvBlock<float>({in, 1, 4, 1, 1, Direction::kDown, Norm::kSpectral, Activation::kSigmoid},
                             rng);

  // Start the power iteration near convergence so one round per step tracks sigma.
  for (auto& block : blocks_) block.warm_up_spectral(kSpectralWarmupIterations);
  attention_.warm_up_spectral(kSpectralWarmupIterations);
  output_.warm_up_spectral(kSpectralWarmupIterations);
}

Var<float> Discriminator::forward(const Var<float>& x, bool training,
                                  AttentionOutput<float>* attention) {
  require_input(x, config_, "discriminator");
  Var<float> h = x;
  for (auto& block : blocks_) h = block.forward(h, training);
  AttentionOutput<float> att = attention_.forward(h, training, attention != nullptr);
  Var<float> y = output_.forward(att.output, training);
  if (attention) *attention = std::move(att);
  return y;
}

void Discriminator::visit(const StateVisitor<float>& visitor, const std::string& prefix) {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i].visit(visitor, prefix + "conv" + std::to_string(i) + ".");
  }
  attention_.visit(visitor, prefix + "attn.");
  output_.visit(visitor, prefix + "out.");
}

std::vector<ParameterInfo> Discriminator::census() { return census_of(*this); }

std::vector<NamedWeight> Discriminator::normalized_weights(int n_iter) const {
  std::vector<NamedWeight> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    out.push_back({"conv" + std::to_string(i) + ".weight", blocks_[i].effective_weight(n_iter)});
  }
  auto att = attention_.effective_weights(n_iter);
  out.push_back({"attn.query.weight", std::move(att[0])});
  out.push_back({"attn.key.weight", std::move(att[1])});
  out.push_back({"attn.value.weight", std::move(att[2])});
  out.push_back({"out.weight", output_.effective_weight(n_iter)});
  return out;
}

int Discriminator::patch_size() const {
  int s = config_.image_size;
  for (const auto& block : blocks_) s = block.spec().out_size(s);
  return output_.spec().out_size(s);
}

std::vector<std::uint8_t> attention_heatmap_png(const Tensor<float>& attention, int batch_index) {
  if (attention.rank() == 3) {
    const int n = attention.dim(1), m = attention.dim(2);
    if (batch_index < 0 || batch_index >= attention.dim(0)) throw RangeError("batch index out of range");
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(n) * m);
    const float* a = attention.data() + static_cast<std::size_t>(batch_index) * n * m;
    for (int r = 0; r < n; ++r) {
      const float* row = a + static_cast<std::size_t>(r) * m;
      const float mx = *std::max_element(row, row + m);
      for (int c = 0; c < m; ++c) {
        const float v = mx > 0.0f ? row[c] / mx : 0.0f;
        pixels[static_cast<std::size_t>(r) * m + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
    return encode_gray8_png(pixels, m, n);
  }
  if (attention.rank() == 4) {
    const int ch = attention.dim(1), plane = attention.dim(2) * attention.dim(3);
    if (batch_index < 0 || batch_index >= attention.dim(0)) throw RangeError("batch index out of range");
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(plane) * ch);
    const float* a = attention.data() + static_cast<std::size_t>(batch_index) * ch * plane;
    for (int p = 0; p < plane; ++p) {
      float mx = 0.0f;
      for (int c = 0; c < ch; ++c) mx = std::max(mx, a[static_cast<std::size_t>(c) * plane + p]);
      for (int c = 0; c < ch; ++c) {
        const float v = mx > 0.0f ? a[static_cast<std::size_t>(c) * plane + p] / mx : 0.0f;
        pixels[static_cast<std::size_t>(p) * ch + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
    return encode_gray8_png(pixels, ch, plane);
  }
  throw ShapeError("attention map must be rank 3 or 4, got " + shape_string(attention.shape()));
}

}  // namespace polarface
