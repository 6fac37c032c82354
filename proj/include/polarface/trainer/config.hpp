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
#include <string>

#include "json.hpp"
#include "polarface/data/face_image.hpp"
#include "polarface/data/split.hpp"
#include "polarface/networks/networks.hpp"
#include "polarface/objectives/features.hpp"
#include "polarface/objectives/losses.hpp"

namespace polarface {

struct AdamConfig {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  Protocol protocol = Protocol::kI;
  /// 0 selects the protocol default (200 for I, 100 for II). Must be even.
  int epochs = 0;
  int batch_size = 8;
  double lr0 = 2e-4;
  AdamConfig adam;
  LossWeights weights;
  GanForm gan_form = GanForm::kNonSaturating;
  NetworkConfig network;
  ExtractorConfig extractor;
  /// Thermal representation the generators translate: polar or s0.
  Modality thermal = Modality::kPolar;
  std::uint64_t seed = 0;
  int checkpoint_interval = 10;
  /// Every computation here is single-threaded and ordered, so runs are
  /// always reproducible; the flag is recorded for provenance.
  bool deterministic = true;

  int resolved_epochs() const;
  void validate() const;
};

/// lr0 on the first half; then lr0 * (epochs - epoch) / (epochs / 2).
/// RangeError unless 0 <= epoch < epochs.
double lr_at(int epoch, const TrainConfig& config);

// JSON round trips. Readers reject unknown keys with ConfigError.
nlohmann::json to_json(const NetworkConfig& c);
nlohmann::json to_json(const LossWeights& w);
nlohmann::json to_json(const ExtractorConfig& e);
nlohmann::json to_json(const TrainConfig& c);
NetworkConfig network_config_from_json(const nlohmann::json& j);
LossWeights loss_weights_from_json(const nlohmann::json& j);
ExtractorConfig extractor_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// ConfigError naming the first key of `j` outside `allowed`.
void require_known_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                        const std::string& where);

}  // namespace polarface
