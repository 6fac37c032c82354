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

#include "polarface/trainer/config.hpp"

#include <algorithm>

#include "polarface/core/error.hpp"

namespace polarface {

using nlohmann::json;

int TrainConfig::resolved_epochs() const {
  if (epochs != 0) return epochs;
  return protocol == Protocol::kI ? 200 : 100;
}

void TrainConfig::validate() const {
  const int e = resolved_epochs();
  if (e < 2 || e % 2 != 0) throw ConfigError("epochs must be even and at least 2");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(lr0 > 0)) throw ConfigError("lr0 must be positive");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1 && adam.eps > 0)) {
    throw ConfigError("adam moments must lie in [0, 1) and eps must be positive");
  }
  if (checkpoint_interval < 1) throw ConfigError("checkpoint_interval must be at least 1");
  if (thermal == Modality::kVisible) throw ConfigError("thermal modality must be polar or s0");
  if (network.image_channels != 3) {
    throw ConfigError("networks take 3-channel input (s0 is replicated)");
  }
  weights.validate();
  network.validate(NetworkKind::kGenerator);
  network.validate(NetworkKind::kDiscriminator);
}

double lr_at(int epoch, const TrainConfig& config) {
  const int epochs = config.resolved_epochs();
  if (epoch < 0 || epoch >= epochs) {
    throw RangeError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(epochs) + ")");
  }
  const int half = epochs / 2;
  if (epoch < half) return config.lr0;
  return config.lr0 * static_cast<double>(epochs - epoch) / half;
}

void require_known_keys(const json& j, std::initializer_list<const char*> allowed,
                        const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + where);
  }
}

template <typename E, typename Parse>
void read_enum(const json& j, const char* key, E& out, Parse parse, const std::string& where) {
  std::string s;
  read(j, key, s, where);
  if (!s.empty()) out = parse(s);
}

}  // namespace

json to_json(const NetworkConfig& c) {
  return {{"image_size", c.image_size},        {"image_channels", c.image_channels},
          {"attention", to_string(c.attention)}, {"stem", to_string(c.stem)},
          {"seed", c.seed},                    {"base_channels", c.base_channels},
          {"attention_cap", c.attention_cap}};
}

json to_json(const LossWeights& w) {
  return {{"lambda_l1", w.lambda_l1}, {"lambda_perceptual", w.lambda_perceptual},
          {"lambda_identity", w.lambda_identity}, {"supervised", w.supervised}};
}

json to_json(const ExtractorConfig& e) {
  return {{"kind", e.kind}, {"seed", e.seed}, {"path", e.path}};
}

json to_json(const TrainConfig& c) {
  return {{"protocol", c.protocol == Protocol::kI ? 1 : 2},
          {"epochs", c.resolved_epochs()},
          {"batch_size", c.batch_size},
          {"lr0", c.lr0},
          {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
          {"weights", to_json(c.weights)},
          {"gan_form", to_string(c.gan_form)},
          {"network", to_json(c.network)},
          {"extractor", to_json(c.extractor)},
          {"thermal", to_string(c.thermal)},
          {"seed", c.seed},
          {"checkpoint_interval", c.checkpoint_interval},
          {"deterministic", c.deterministic}};
}

NetworkConfig network_config_from_json(const json& j) {
  const std::string where = "network config";
  require_known_keys(j, {"image_size", "image_channels", "attention", "stem", "seed",
                         "base_channels", "attention_cap"},
                     where);
  NetworkConfig c;
  read(j, "image_size", c.image_size, where);
  read(j, "image_channels", c.image_channels, where);
  read_enum(j, "attention", c.attention, parse_attention_mode, where);
  read_enum(j, "stem", c.stem, parse_stem_policy, where);
  read(j, "seed", c.seed, where);
  read(j, "base_channels", c.base_channels, where);
  read(j, "attention_cap", c.attention_cap, where);
  return c;
}

LossWeights loss_weights_from_json(const json& j) {
  const std::string where = "loss weights";
  require_known_keys(j, {"lambda_l1", "lambda_perceptual", "lambda_identity", "supervised"}, where);
  LossWeights w;
  read(j, "lambda_l1", w.lambda_l1, where);
  read(j, "lambda_perceptual", w.lambda_perceptual, where);
  read(j, "lambda_identity", w.lambda_identity, where);
  read(j, "supervised", w.supervised, where);
  return w;
}

ExtractorConfig extractor_config_from_json(const json& j) {
  const std::string where = "extractor config";
  require_known_keys(j, {"kind", "seed", "path"}, where);
  ExtractorConfig e;
  read(j, "kind", e.kind, where);
  read(j, "seed", e.seed, where);
  read(j, "path", e.path, where);
  return e;
}

TrainConfig train_config_from_json(const json& j) {
  const std::string where = "train config";
  require_known_keys(j, {"protocol", "epochs", "batch_size", "lr0", "adam", "weights", "gan_form",
                         "network", "extractor", "thermal", "seed", "checkpoint_interval",
                         "deterministic"},
                     where);
  TrainConfig c;
  if (j.contains("protocol")) {
    const json& p = j.at("protocol");
    c.protocol = parse_protocol(p.is_number() ? std::to_string(p.get<int>()) : p.get<std::string>());
  }
  read(j, "epochs", c.epochs, where);
  read(j, "batch_size", c.batch_size, where);
  read(j, "lr0", c.lr0, where);
  if (j.contains("adam")) {
    const json& a = j.at("adam");
    require_known_keys(a, {"beta1", "beta2", "eps"}, "adam config");
    read(a, "beta1", c.adam.beta1, where);
    read(a, "beta2", c.adam.beta2, where);
    read(a, "eps", c.adam.eps, where);
  }
  if (j.contains("weights")) c.weights = loss_weights_from_json(j.at("weights"));
  read_enum(j, "gan_form", c.gan_form, parse_gan_form, where);
  if (j.contains("network")) c.network = network_config_from_json(j.at("network"));
  if (j.contains("extractor")) c.extractor = extractor_config_from_json(j.at("extractor"));
  read_enum(j, "thermal", c.thermal, parse_modality, where);
  read(j, "seed", c.seed, where);
  read(j, "checkpoint_interval", c.checkpoint_interval, where);
  read(j, "deterministic", c.deterministic, where);
  return c;
}

}  // namespace polarface
