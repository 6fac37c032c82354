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
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "polarface/data/catalog.hpp"
#include "polarface/io/archive.hpp"
#include "polarface/trainer/config.hpp"

namespace polarface {

using NamedParameters = std::vector<std::pair<std::string, Var<float>*>>;

template <typename Net>
NamedParameters named_parameters(Net& net) {
  NamedParameters out;
  StateVisitor<float> v;
  v.param = [&](const std::string& name, Var<float>& p) { out.emplace_back(name, &p); };
  net.visit(v);
  return out;
}

/// Adam over one parameter group; parameters without a gradient are skipped.
class Adam {
 public:
  Adam(NamedParameters params, const AdamConfig& config);

  void step(double lr);
  void zero_grad();
  std::int64_t steps() const { return t_; }

  void save(Archive& archive, const std::string& prefix) const;
  void load(const Archive& archive, const std::string& prefix, std::int64_t steps);

 private:
  NamedParameters params_;
  AdamConfig config_;
  std::vector<Tensor<float>> m_, v_;
  std::int64_t t_ = 0;
};

/// Channel-first image batches [B, 3, S, S]; thermal is already 3-channel.
struct Batch {
  Tensor<float> visible;
  Tensor<float> thermal;
  std::vector<std::string> subjects;  // every subject whose image is in the batch
};

Batch make_batch(const std::vector<ImagePair>& pairs, const std::vector<std::size_t>& visible_index,
                 const std::vector<std::size_t>& thermal_index);

struct StepLog {
  std::int64_t step = 0;
  int epoch = 0;
  double lr = 0;
  LossRecord losses;
};

struct FitOptions {
  /// Checkpoints, losses.csv and audit.csv go here; empty writes nothing.
  std::string out_dir;
  /// Stop after this many completed epochs (simulates an interruption).
  int stop_after_epoch = -1;
  std::function<void(const StepLog&)> on_step;
};

struct FitResult {
  std::vector<StepLog> log;
  std::vector<std::string> checkpoints;
  std::set<std::string> consumed_subjects;
};

/// Owns G_tv (thermal to visible), G_vt, D_v, D_t, their optimizers and the
/// frozen feature extractor.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& config);
  /// Resumes from a checkpoint written by checkpoint().
  explicit Trainer(const Archive& checkpoint);

  /// Discriminators first (fakes detached), then both generators on total_G.
  /// DivergenceError names the first non-finite term.
  LossRecord train_step(const Batch& batch, double lr);

  /// Trains from the current epoch to the configured end.
  FitResult fit(const SubjectCatalog& catalog, const ProtocolSplit& split,
                const FitOptions& options = {});

  Archive checkpoint();
  void restore(const Archive& archive);

  const TrainConfig& config() const { return config_; }
  int epoch() const { return epoch_; }
  std::int64_t step() const { return step_; }
  Generator& g_tv() { return *g_tv_; }
  Generator& g_vt() { return *g_vt_; }
  Discriminator& d_v() { return *d_v_; }
  Discriminator& d_t() { return *d_t_; }
  const FeatureExtractor<float>& extractor() const { return *extractor_; }

 private:
  void build();

  TrainConfig config_;
  std::unique_ptr<Generator> g_tv_, g_vt_;
  std::unique_ptr<Discriminator> d_v_, d_t_;
  std::unique_ptr<Adam> opt_g_tv_, opt_g_vt_, opt_d_v_, opt_d_t_;
  std::unique_ptr<FeatureExtractor<float>> extractor_;
  int epoch_ = 0;
  std::int64_t step_ = 0;
};

/// Both generators of a checkpoint (evaluation only).
struct GeneratorPair {
  TrainConfig config;
  std::unique_ptr<Generator> t2v;
  std::unique_ptr<Generator> v2t;
};

GeneratorPair load_generators(const Archive& checkpoint);

/// Header and row formatting of the loss log.
std::string loss_log_header();
std::string loss_log_row(const StepLog& entry);

}  // namespace polarface
