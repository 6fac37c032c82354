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

#include "polarface/objectives/features.hpp"

#include <cmath>

#include "json.hpp"
#include "polarface/core/error.hpp"
#include "polarface/io/archive.hpp"

namespace polarface {

const char* to_string(FeatureTap tap) noexcept {
  switch (tap) {
    case FeatureTap::kMid: return "mid";
    case FeatureTap::kDeep: return "deep";
    case FeatureTap::kEmbedding: return "embedding";
  }
  return "?";
}

template <typename T>
Var<T> FeatureExtractor<T>::tap(const Var<T>& x, FeatureTap which) const {
  if (!has_tap(which)) {
    throw ConfigError(identifier() + " extractor has no " + to_string(which) + " tap");
  }
  const FeatureSet<T> f = extract(x, which == FeatureTap::kMid, which == FeatureTap::kDeep,
                                  which == FeatureTap::kEmbedding);
  return which == FeatureTap::kMid ? f.mid : which == FeatureTap::kDeep ? f.deep : f.embedding;
}

void ConvStackSpec::validate() const {
  const int n = static_cast<int>(blocks.size());
  if (n == 0) throw ConfigError("extractor needs at least one block");
  for (const auto& b : blocks) {
    if (b.empty()) throw ConfigError("extractor block without convolutions");
    for (int w : b)
      if (w < 1) throw ConfigError("extractor widths must be positive");
  }
  if (mid_block < 0 || mid_block >= n || deep_block < 0 || deep_block >= n) {
    throw ConfigError("extractor tap block out of range");
  }
  if (fc_grid < 1 || fc6 < 1 || fc7 < 1) throw ConfigError("extractor fc sizes must be positive");
}

namespace {

nlohmann::json spec_to_json(const ConvStackSpec& s) {
  return {{"kind", "conv-stack"}, {"blocks", s.blocks}, {"mid_block", s.mid_block},
          {"deep_block", s.deep_block}, {"fc_grid", s.fc_grid}, {"fc6", s.fc6}, {"fc7", s.fc7}};
}

ConvStackSpec spec_from_json(const std::string& text) {
  ConvStackSpec s;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.value("kind", std::string()) != "conv-stack") {
      throw ConfigError("extractor archive is not a conv-stack");
    }
    s.blocks = j.at("blocks").get<std::vector<std::vector<int>>>();
    s.mid_block = j.at("mid_block").get<int>();
    s.deep_block = j.at("deep_block").get<int>();
    s.fc_grid = j.at("fc_grid").get<int>();
    s.fc6 = j.at("fc6").get<int>();
    s.fc7 = j.at("fc7").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad extractor manifest: " + std::string(e.what()));
  }
  s.validate();
  return s;
}

template <typename T>
Var<T> frozen(Tensor<T> t) {
  return constant(std::move(t));
}

template <typename T>
Tensor<T> he_normal(Shape shape, int fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double std = std::sqrt(2.0 / fan_in);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.normal(0.0, std));
  return t;
}

template <typename T>
Tensor<T> from_archive(const Archive& a, const std::string& name, const Shape& shape) {
  const Tensor<float>& src = a.at(name);
  if (src.shape() != shape) {
    throw ConfigError("extractor array " + name + " has shape " + shape_string(src.shape()) +
                      ", expected " + shape_string(shape));
  }
  Tensor<T> t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(src[i]);
  return t;
}

template <typename T>
Tensor<float> to_float(const Tensor<T>& t) {
  Tensor<float> out(t.shape());
  for (std::size_t i = 0; i < t.numel(); ++i) out[i] = static_cast<float>(t[i]);
  return out;
}

}  // namespace

template <typename T>
void ConvStackExtractor<T>::allocate() {
  convs_.clear();
  int in = 3;
  for (std::size_t b = 0; b < spec_.blocks.size(); ++b) {
    std::vector<Conv> block;
    for (std::size_t l = 0; l < spec_.blocks[b].size(); ++l) {
      const int out = spec_.blocks[b][l];
      Conv c;
      c.name = "conv" + std::to_string(b + 1) + "_" + std::to_string(l + 1);
      c.weight = frozen(Tensor<T>(Shape{out, in, 3, 3}));
      c.bias = frozen(Tensor<T>(Shape{out}));
      block.push_back(std::move(c));
      in = out;
    }
    convs_.push_back(std::move(block));
  }
  const int flat = in * spec_.fc_grid * spec_.fc_grid;
  fc6_ = {"fc6", frozen(Tensor<T>(Shape{spec_.fc6, flat})), frozen(Tensor<T>(Shape{spec_.fc6}))};
  fc7_ = {"fc7", frozen(Tensor<T>(Shape{spec_.fc7, spec_.fc6})), frozen(Tensor<T>(Shape{spec_.fc7}))};
}

template <typename T>
ConvStackExtractor<T>::ConvStackExtractor(const ConvStackSpec& spec, std::uint64_t seed)
    : spec_(spec), identifier_("random-conv-stack:" + std::to_string(seed)) {
  spec_.validate();
  allocate();
  Rng rng(derive_seed(seed, 0x46454154));
  for (auto& block : convs_) {
    for (auto& c : block) {
      const Shape s = c.weight->value.shape();
      c.weight->value = he_normal<T>(s, s[1] * 9, rng);
    }
  }
  for (Conv* fc : {&fc6_, &fc7_}) {
    const Shape s = fc->weight->value.shape();
    fc->weight->value = he_normal<T>(s, s[1], rng);
  }
}

template <typename T>
ConvStackExtractor<T>::ConvStackExtractor(const Archive& archive)
    : spec_(spec_from_json(archive.manifest)), identifier_("archive-conv-stack") {
  allocate();
  auto load = [&](Conv& c) {
    c.weight->value = from_archive<T>(archive, c.name + ".weight", c.weight->value.shape());
    c.bias->value = from_archive<T>(archive, c.name + ".bias", c.bias->value.shape());
  };
  for (auto& block : convs_)
    for (auto& c : block) load(c);
  load(fc6_);
  load(fc7_);
}

template <typename T>
Archive ConvStackExtractor<T>::to_archive() const {
  Archive a;
  a.manifest = spec_to_json(spec_).dump();
  auto store = [&](const Conv& c) {
    a.arrays[c.name + ".weight"] = to_float(c.weight->value);
    a.arrays[c.name + ".bias"] = to_float(c.bias->value);
  };
  for (const auto& block : convs_)
    for (const auto& c : block) store(c);
  store(fc6_);
  store(fc7_);
  return a;
}

template <typename T>
FeatureSet<T> ConvStackExtractor<T>::extract(const Var<T>& x, bool mid, bool deep,
                                             bool embedding) const {
  require_rank(x->value.shape(), 4, "extractor input");
  if (x->value.dim(1) != 3) throw ShapeError("extractor expects 3-channel input");
  FeatureSet<T> out;
  const int last = embedding ? static_cast<int>(convs_.size()) - 1
                             : std::max(deep ? spec_.deep_block : -1, mid ? spec_.mid_block : -1);
  Var<T> h = x;
  for (int b = 0; b <= last; ++b) {
    if (b > 0) {
      const int nh = std::max(1, h->value.dim(2) / 2), nw = std::max(1, h->value.dim(3) / 2);
      h = adaptive_avg_pool2d(h, nh, nw);
    }
    for (const Conv& c : convs_[b]) h = relu(conv2d(h, c.weight, c.bias, 1, 1));
    if (mid && b == spec_.mid_block) out.mid = h;
    if (deep && b == spec_.deep_block) out.deep = h;
  }
  if (embedding) {
    h = adaptive_avg_pool2d(h, spec_.fc_grid, spec_.fc_grid);
    const int batch = h->value.dim(0);
    h = reshape(h, Shape{batch, static_cast<int>(h->value.numel() / batch)});
    h = relu(linear(h, fc6_.weight, fc6_.bias));
    out.embedding = linear(h, fc7_.weight, fc7_.bias);
  }
  return out;
}

template <typename T>
FeatureSet<T> PixelExtractor<T>::extract(const Var<T>& x, bool mid, bool deep,
                                         bool embedding) const {
  FeatureSet<T> out;
  if (mid) out.mid = x;
  if (deep) out.deep = x;
  if (embedding) {
    const int batch = x->value.dim(0);
    out.embedding = reshape(x, Shape{batch, static_cast<int>(x->value.numel() / batch)});
  }
  return out;
}

template <typename T>
std::pair<Var<T>, Var<T>> feature_losses(const FeatureExtractor<T>& extractor, const Var<T>& x_hat,
                                         const Var<T>& x) {
  for (FeatureTap t : {FeatureTap::kMid, FeatureTap::kDeep}) {
    if (!extractor.has_tap(t)) {
      throw ConfigError(extractor.identifier() + " extractor has no " + to_string(t) + " tap");
    }
  }
  require_same_shape(x_hat->value.shape(), x->value.shape(), "feature loss inputs");
  const FeatureSet<T> a = extractor.extract(x_hat, true, true, false);
  const FeatureSet<T> b = extractor.extract(x, true, true, false);
  return {mean_abs_diff(a.mid, b.mid), mean_abs_diff(a.deep, b.deep)};
}

std::unique_ptr<FeatureExtractor<float>> make_extractor(const ExtractorConfig& config) {
  if (config.kind == "random") {
    return std::make_unique<ConvStackExtractor<float>>(ConvStackSpec{}, config.seed);
  }
  if (config.kind == "pixel") return std::make_unique<PixelExtractor<float>>();
  if (config.kind == "archive") {
    if (config.path.empty()) throw ConfigError("archive extractor needs a path");
    return std::make_unique<ConvStackExtractor<float>>(load_archive(config.path));
  }
  throw ConfigError("unknown extractor kind '" + config.kind + "' (expected random, pixel or archive)");
}

template class FeatureExtractor<float>;
template class FeatureExtractor<double>;
template class ConvStackExtractor<float>;
template class ConvStackExtractor<double>;
template class PixelExtractor<float>;
template class PixelExtractor<double>;
template std::pair<Var<float>, Var<float>> feature_losses(const FeatureExtractor<float>&,
                                                          const Var<float>&, const Var<float>&);
template std::pair<Var<double>, Var<double>> feature_losses(const FeatureExtractor<double>&,
                                                            const Var<double>&, const Var<double>&);

}  // namespace polarface
