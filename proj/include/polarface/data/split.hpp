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
#include <vector>

#include "polarface/data/catalog.hpp"

namespace polarface {

enum class Protocol { kI = 1, kII = 2 };

const char* to_string(Protocol p) noexcept;
/// Accepts "1", "2", "I", "II".
Protocol parse_protocol(const std::string& name);

/// Subject counts per protocol. The defaults are the published sizes; smaller
/// values serve desk-scale runs.
struct ProtocolCounts {
  int protocol1_train = 30;
  int protocol1_eval = 30;
  int protocol2_train = 25;  // Volume-II subjects added to all of Volume I
  int protocol2_eval = 26;

  bool operator==(const ProtocolCounts&) const = default;
};

struct ProtocolSplit {
  Protocol protocol = Protocol::kI;
  std::uint64_t trial_seed = 0;
  std::vector<std::string> train_subjects;  // sorted
  std::vector<std::string> eval_subjects;   // sorted
  /// Training images are limited to this range tag; empty means all ranges.
  std::string train_range;
};

/// Protocol I: disjoint train/eval subjects from Volume I, training on range
/// "1". Protocol II: all of Volume I plus some Volume-II subjects for training,
/// evaluation on Volume-II subjects absent from Volume I. Throws ConfigError
/// when the catalog cannot supply the requested counts.
ProtocolSplit build_split(const SubjectCatalog& catalog, Protocol protocol,
                          std::uint64_t trial_seed, const ProtocolCounts& counts = {});

}  // namespace polarface
