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

#include "polarface/data/split.hpp"

#include <algorithm>

#include "polarface/core/error.hpp"
#include "polarface/core/rng.hpp"

namespace polarface {

const char* to_string(Protocol p) noexcept { return p == Protocol::kI ? "I" : "II"; }

Protocol parse_protocol(const std::string& name) {
  if (name == "1" || name == "I") return Protocol::kI;
  if (name == "2" || name == "II") return Protocol::kII;
  throw ConfigError("unknown protocol '" + name + "' (expected 1 or 2)");
}

namespace {

std::vector<std::string> shuffled(std::vector<std::string> ids, Rng& rng) {
  std::sort(ids.begin(), ids.end());
  rng.shuffle(ids.begin(), ids.end());
  return ids;
}

std::vector<std::string> sorted(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

ProtocolSplit build_split(const SubjectCatalog& catalog, Protocol protocol,
                          std::uint64_t trial_seed, const ProtocolCounts& counts) {
  ProtocolSplit split;
  split.protocol = protocol;
  split.trial_seed = trial_seed;
  Rng rng(derive_seed(trial_seed, 0x53504c4954ull + static_cast<std::uint64_t>(protocol)));
  const auto vol1 = catalog.subjects_in(Volume::kI);
  const auto vol2 = catalog.subjects_in(Volume::kII);

  if (protocol == Protocol::kI) {
    const int need = counts.protocol1_train + counts.protocol1_eval;
    // A zero eval count gives a training-only split; evaluation rejects it.
    if (counts.protocol1_train < 1 || counts.protocol1_eval < 0) {
      throw ConfigError("protocol I needs a train subject and a non-negative eval count");
    }
    if (static_cast<int>(vol1.size()) < need) {
      throw ConfigError("protocol I needs " + std::to_string(need) + " Volume-I subjects, catalog has " +
                        std::to_string(vol1.size()));
    }
    const auto ids = shuffled({vol1.begin(), vol1.end()}, rng);
    split.train_subjects = sorted({ids.begin(), ids.begin() + counts.protocol1_train});
    split.eval_subjects = sorted({ids.begin() + counts.protocol1_train, ids.begin() + need});
    split.train_range = "1";
    return split;
  }

  if (counts.protocol2_train < 0 || counts.protocol2_eval < 1) {
    throw ConfigError("protocol II counts must be non-negative with at least one eval subject");
  }
  std::vector<std::string> unseen;
  for (const auto& id : vol2) {
    if (!vol1.count(id)) unseen.push_back(id);
  }
  if (static_cast<int>(unseen.size()) < counts.protocol2_eval + counts.protocol2_train) {
    throw ConfigError("protocol II needs " +
                      std::to_string(counts.protocol2_eval + counts.protocol2_train) +
                      " Volume-II subjects absent from Volume I, catalog has " +
                      std::to_string(unseen.size()));
  }
  const auto ids = shuffled(unseen, rng);
  split.eval_subjects = sorted({ids.begin(), ids.begin() + counts.protocol2_eval});
  std::vector<std::string> train(vol1.begin(), vol1.end());
  train.insert(train.end(), ids.begin() + counts.protocol2_eval,
               ids.begin() + counts.protocol2_eval + counts.protocol2_train);
  split.train_subjects = sorted(train);
  return split;
}

}  // namespace polarface
