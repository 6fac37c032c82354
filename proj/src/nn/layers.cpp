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

#include "polarface/nn/layers.hpp"

#include "polarface/core/error.hpp"

namespace polarface {
namespace {

template <typename T>
Tensor<T> gaussian(Shape shape, Rng& rng, double sd) {
  Tensor<T> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal(0.0, sd));
  return t;
}

// Above this many attention entries the no-grad path switches to row blocks.
constexpr std::size_t kMaterializeLimit = std::size_t{1} << 26;

}  // namespace

int ConvBlockSpec::out_size(int in) const {
  return direction == Direction::kDown ? conv_out_size(in, kernel, stride, padding)
                                       : conv_transpose_out_size(in, kernel, stride, padding);
}

template <typename T>
Var<T> activate(const Var<T>& x, Activation act) {
  switch (act) {
    case Activation::kNone: return x;
    case Activation::kRelu: return relu(x);
    case Activation::kLeakyRelu: return leaky_relu(x, static_cast<T>(kLeakySlope));
    case Activation::kTanh: return tanh(x);
    case Activation::kSigmoid: return sigmoid(x);
  }
  return x;
}

// --- ConvBlock ---------------------------------------------------------------

template <typename T>
ConvBlock<T>::ConvBlock(const ConvBlockSpec& spec, Rng& rng) : spec_(spec) {
  if (spec.in_channels <= 0 || spec.out_channels <= 0 || spec.kernel <= 0 || spec.stride <= 0 ||
      spec.padding < 0) {
    throw ConfigError("invalid convolution block geometry");
  }
  if (spec.norm == Norm::kSpectral && spec.direction == Direction::kUp) {
    throw ConfigError("spectral norm is only supported on down convolutions");
  }
  const Shape wshape = spec.direction == Direction::kDown
                           ? Shape{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel}
                           : Shape{spec.in_channels, spec.out_channels, spec.kernel, spec.kernel};
  weight_ = parameter(gaussian<T>(wshape, rng, kInitStd));
  bias_ = parameter(Tensor<T>(Shape{spec.out_channels}, T(0)));
  if (spec.norm == Norm::kBatch) {
    gamma_ = parameter(Tensor<T>(Shape{spec.out_channels}, T(1)));
    beta_ = parameter(Tensor<T>(Shape{spec.out_channels}, T(0)));
    stats_ = BatchNormStats<T>(spec.out_channels);
  }
  if (spec.norm == Norm::kSpectral) {
    spectral_ = SpectralState<T>(spec.out_channels, spec.in_channels * spec.kernel * spec.kernel, rng);
  }
}

template <typename T>
Var<T> ConvBlock<T>::forward(const Var<T>& x, bool training) {
  require_rank(x->value.shape(), 4, "conv block input");
  if (x->value.dim(1) != spec_.in_channels) {
    throw ShapeError("conv block expects " + std::to_string(spec_.in_channels) +
                     " channels, got " + shape_string(x->value.shape()));
  }
  Var<T> w = weight_;
  if (spec_.norm == Norm::kSpectral) {
    w = spectral_normalize(weight_, spectral_, training ? power_iterations : 0);
  }
  Var<T> y = spec_.direction == Direction::kDown
                 ? conv2d(x, w, bias_, spec_.stride, spec_.padding)
                 : conv_transpose2d(x, w, bias_, spec_.stride, spec_.padding);
  if (spec_.norm == Norm::kBatch) {
    y = batch_norm(y, gamma_, beta_, stats_, training, static_cast<T>(kBatchNormMomentum),
                   static_cast<T>(kBatchNormEps));
  }
  return activate(y, spec_.activation);
}

template <typename T>
void ConvBlock<T>::visit(const StateVisitor<T>& visitor, const std::string& prefix) {
  if (visitor.param) {
    visitor.param(prefix + "weight", weight_);
    visitor.param(prefix + "bias", bias_);
    if (spec_.norm == Norm::kBatch) {
      visitor.param(prefix + "bn.gamma", gamma_);
      visitor.param(prefix + "bn.beta", beta_);
    }
  }
  if (visitor.buffer) {
    if (spec_.norm == Norm::kBatch) {
      visitor.buffer(prefix + "bn.running_mean", stats_.running_mean);
      visitor.buffer(prefix + "bn.running_var", stats_.running_var);
    }
    if (spec_.norm == Norm::kSpectral) {
      visitor.buffer(prefix + "sn.u", spectral_.u);
      visitor.buffer(prefix + "sn.v", spectral_.v);
    }
  }
}

template <typename T>
Tensor<T> ConvBlock<T>::effective_weight(int n_iter) const {
  Tensor<T> w = weight_->value;
  if (spec_.norm != Norm::kSpectral) return w;
  const double sigma = std::max(spectral_sigma(w, spectral_, n_iter), kSpectralEps);
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(w[i] / sigma);
  return w;
}

template <typename T>
void ConvBlock<T>::warm_up_spectral(int n_iter) {
  if (spec_.norm != Norm::kSpectral) return;
  const int rows = weight_->value.dim(0);
  power_iteration(weight_->value.data(), rows, static_cast<int>(weight_->value.numel() / rows),
                  spectral_, n_iter);
}

// --- ResidualBlock -------------------------------------------------------------

template <typename T>
ResidualBlock<T>::ResidualBlock(int channels, Rng& rng)
    : first_({channels, channels, 3, 1, 1, Direction::kDown, Norm::kBatch, Activation::kRelu}, rng),
      second_({channels, channels, 3, 1, 1, Direction::kDown, Norm::kBatch, Activation::kNone},
              rng) {}

template <typename T>
Var<T> ResidualBlock<T>::forward(const Var<T>& x, bool training) {
  return add(x, second_.forward(first_.forward(x, training), training));
}

template <typename T>
void ResidualBlock<T>::visit(const StateVisitor<T>& visitor, const std::string& prefix) {
  first_.visit(visitor, prefix + "conv1.");
  second_.visit(visitor, prefix + "conv2.");
}

// --- SelfAttention ---------------------------------------------------------------

const char* to_string(AttentionMode mode) noexcept {
  return mode == AttentionMode::kSagan ? "sagan" : "literal";
}

AttentionMode parse_attention_mode(const std::string& name) {
  if (name == "sagan") return AttentionMode::kSagan;
  if (name == "literal") return AttentionMode::kLiteral;
  throw ConfigError("unknown attention mode '" + name + "' (expected sagan or literal)");
}

template <typename T>
SelfAttention<T>::SelfAttention(int channels, AttentionMode mode, Rng& rng, int cap,
                                bool spectral)
    : channels_(channels),
      key_channels_(mode == AttentionMode::kSagan ? std::max(channels / 8, 1) : channels),
      mode_(mode),
      cap_(cap),
      spectral_(spectral) {
  if (channels <= 0) throw ConfigError("attention needs a positive channel count");
  if (cap <= 0) throw ConfigError("attention cap must be positive");
  query_weight = parameter(gaussian<T>({key_channels_, channels, 1, 1}, rng, kInitStd));
  query_bias = parameter(Tensor<T>(Shape{key_channels_}, T(0)));
  key_weight = parameter(gaussian<T>({key_channels_, channels, 1, 1}, rng, kInitStd));
  key_bias = parameter(Tensor<T>(Shape{key_channels_}, T(0)));
  value_weight = parameter(gaussian<T>({channels, channels, 1, 1}, rng, kInitStd));
  value_bias = parameter(Tensor<T>(Shape{channels}, T(0)));
  gamma_ = parameter(Tensor<T>(Shape{1}, T(0)));
  if (spectral) {
    sn_query_ = SpectralState<T>(key_channels_, channels, rng);
    sn_key_ = SpectralState<T>(key_channels_, channels, rng);
    sn_value_ = SpectralState<T>(channels, channels, rng);
  }
}

template <typename T>
Var<T> SelfAttention<T>::projection(const Var<T>& w, SpectralState<T>& state, bool training) {
  return spectral_ ? spectral_normalize(w, state, training ? power_iterations : 0) : w;
}

template <typename T>
std::vector<Tensor<T>> SelfAttention<T>::effective_weights(int n_iter) const {
  std::vector<Tensor<T>> out;
  const std::pair<const Var<T>*, const SpectralState<T>*> items[] = {
      {&query_weight, &sn_query_}, {&key_weight, &sn_key_}, {&value_weight, &sn_value_}};
  for (const auto& [w, state] : items) {
    Tensor<T> t = (*w)->value;
    if (spectral_) {
      const double sigma = std::max(spectral_sigma(t, *state, n_iter), kSpectralEps);
      for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(t[i] / sigma);
    }
    out.push_back(std::move(t));
  }
  return out;
}

template <typename T>
void SelfAttention<T>::warm_up_spectral(int n_iter) {
  if (!spectral_) return;
  power_iteration(query_weight->value.data(), key_channels_, channels_, sn_query_, n_iter);
  power_iteration(key_weight->value.data(), key_channels_, channels_, sn_key_, n_iter);
  power_iteration(value_weight->value.data(), channels_, channels_, sn_value_, n_iter);
}

template <typename T>
AttentionOutput<T> SelfAttention<T>::forward(const Var<T>& x, bool training,
                                             bool keep_attention) {
  require_rank(x->value.shape(), 4, "attention input");
  if (x->value.dim(1) != channels_) {
    throw ShapeError("attention expects " + std::to_string(channels_) + " channels, got " +
                     shape_string(x->value.shape()));
  }
  const int batch = x->value.dim(0), h = x->value.dim(2), w = x->value.dim(3);
  const int n = h * w;
  AttentionOutput<T> result;
  const Var<T> wq = projection(query_weight, sn_query_, training);
  const Var<T> wk = projection(key_weight, sn_key_, training);
  const Var<T> wv = projection(value_weight, sn_value_, training);
  Var<T> q = conv2d(x, wq, query_bias, 1, 0);

  if (mode_ == AttentionMode::kLiteral) {
    Var<T> k = conv2d(x, wk, key_bias, 1, 0);
    Var<T> v = conv2d(x, wv, value_bias, 1, 0);
    Var<T> a = softmax_channels(mul(q, k));
    result.output = mul(a, v);
    if (keep_attention) result.attention = a->value;
    return result;
  }

  Var<T> src = x;
  if (n > cap_ && h % 2 == 0 && w % 2 == 0) src = avg_pool2d(x, 2);
  const int m = src->value.dim(2) * src->value.dim(3);
  Var<T> k = conv2d(src, wk, key_bias, 1, 0);
  Var<T> v = conv2d(src, wv, value_bias, 1, 0);

  const std::size_t entries = static_cast<std::size_t>(batch) * n * m;
  if (!grad_enabled() && !keep_attention && entries > kMaterializeLimit) {
    Tensor<T> o = attention_rows_blocked(q->value.reshaped({batch, key_channels_, n}),
                                         k->value.reshaped({batch, key_channels_, m}),
                                         v->value.reshaped({batch, channels_, m}));
    const T g = gamma_->value[0];
    Tensor<T> out = x->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = g * o[i] + out[i];
    result.output = constant(std::move(out));
    return result;
  }

  Var<T> a = attention_weights(reshape(q, {batch, key_channels_, n}),
                               reshape(k, {batch, key_channels_, m}));
  Var<T> o = reshape(attend(reshape(v, {batch, channels_, m}), a), {batch, channels_, h, w});
  result.output = add(scale_by(o, gamma_), x);
  if (keep_attention) result.attention = a->value;
  return result;
}

template <typename T>
void SelfAttention<T>::visit(const StateVisitor<T>& visitor, const std::string& prefix) {
  if (spectral_ && visitor.buffer) {
    visitor.buffer(prefix + "query.sn.u", sn_query_.u);
    visitor.buffer(prefix + "query.sn.v", sn_query_.v);
    visitor.buffer(prefix + "key.sn.u", sn_key_.u);
    visitor.buffer(prefix + "key.sn.v", sn_key_.v);
    visitor.buffer(prefix + "value.sn.u", sn_value_.u);
    visitor.buffer(prefix + "value.sn.v", sn_value_.v);
  }
  if (!visitor.param) return;
  visitor.param(prefix + "query.weight", query_weight);
  visitor.param(prefix + "query.bias", query_bias);
  visitor.param(prefix + "key.weight", key_weight);
  visitor.param(prefix + "key.bias", key_bias);
  visitor.param(prefix + "value.weight", value_weight);
  visitor.param(prefix + "value.bias", value_bias);
  visitor.param(prefix + "gamma", gamma_);
}

template Var<float> activate<float>(const Var<float>&, Activation);
template Var<double> activate<double>(const Var<double>&, Activation);
template class ConvBlock<float>;
template class ConvBlock<double>;
template class ResidualBlock<float>;
template class ResidualBlock<double>;
template class SelfAttention<float>;
template class SelfAttention<double>;

}  // namespace polarface
