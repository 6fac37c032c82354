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

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "polarface/data/split.hpp"
#include "polarface/trainer/config.hpp"
#include "polarface/verification/verification.hpp"

namespace polarface {

/// Everything one run needs. Read from a JSON file, then overridden by flags.
struct RunConfig {
  /// Catalog manifest; relative paths resolve against the config file.
  std::string catalog;
  std::string out = "run";
  TrainConfig train;
  ProtocolCounts counts;
  /// Split trial used by `train`; `evaluate` runs trials 0..trials-1.
  int trial = 0;
  int trials = 5;
  std::uint64_t eval_seed = 0;
  std::vector<VerifyMode> modes{VerifyMode::kFusion};
  bool normalize_templates = false;
  bool exclude_same_capture = true;
  int eval_batch_size = 8;
  /// Fixed checkpoint for evaluate/verify/synthesize; `evaluate` trains one
  /// model per trial when empty.
  std::string checkpoint;

  void validate() const;
  EvalConfig eval_config() const;
};

nlohmann::json to_json(const RunConfig& c);
/// ConfigError on unknown keys or ill-typed values.
RunConfig run_config_from_json(const nlohmann::json& j);

/// Exit status of the command-line front end.
enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitConfig = 2 };

/// argv without the program name. Writes progress to `out` and categorized
/// errors to `err`.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace polarface
