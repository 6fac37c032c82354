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


#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "polarface/core/error.hpp"
#include "polarface/data/fixture.hpp"
#include "polarface/trainer/trainer.hpp"

using namespace polarface;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 4;
  c.batch_size = 4;
  c.network.image_size = 64;
  c.network.base_channels = 4;
  c.network.attention_cap = 256;
  c.extractor.kind = "pixel";
  c.checkpoint_interval = 3;
  c.seed = 11;
  return c;
}

const SubjectCatalog& tiny_catalog() {
  static const SubjectCatalog catalog = synth_fixture(6, 1, 64, 5);
  return catalog;
}

ProtocolSplit tiny_split() {
  ProtocolCounts counts;
  counts.protocol1_train = 4;
  counts.protocol1_eval = 2;
  return build_split(tiny_catalog(), Protocol::kI, 3, counts);
}

Batch tiny_batch(const TrainConfig& c) {
  const auto split = tiny_split();
  const auto pairs = collect_pairs(tiny_catalog(), split.train_subjects, c.thermal,
                                   c.network.image_size);
  return make_batch(pairs, {0, 1, 2, 3}, {0, 1, 2, 3});
}

bool same_arrays(const Archive& a, const Archive& b) {
  if (a.arrays.size() != b.arrays.size()) return false;
  for (const auto& [name, t] : a.arrays) {
    if (!b.contains(name)) return false;
    const auto& u = b.at(name);
    if (t.shape() != u.shape()) return false;
    for (std::size_t i = 0; i < t.numel(); ++i) {
      if (t[i] != u[i]) return false;
    }
  }
  return true;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("polarface_test_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("lr schedule examples") {
  TrainConfig c;  // Protocol I, 200 epochs
  CHECK(lr_at(0, c) == doctest::Approx(2e-4).epsilon(1e-15));
  CHECK(lr_at(150, c) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(lr_at(199, c) == doctest::Approx(2e-4 / 100).epsilon(1e-12));
  CHECK_THROWS_AS(lr_at(200, c), RangeError);
  CHECK_THROWS_AS(lr_at(-1, c), RangeError);
  c.protocol = Protocol::kII;
  CHECK(c.resolved_epochs() == 100);
  CHECK(lr_at(99, c) == doctest::Approx(2e-4 / 50).epsilon(1e-12));
}

TEST_CASE("lr schedule is flat on the first half and non-increasing") {
  for (int epochs : {2, 4, 10, 100, 200}) {
    TrainConfig c;
    c.epochs = epochs;
    double prev = lr_at(0, c);
    for (int e = 0; e < epochs; ++e) {
      const double lr = lr_at(e, c);
      if (e < epochs / 2) CHECK(lr == c.lr0);
      CHECK(lr <= prev);
      CHECK(lr > 0);
      prev = lr;
    }
  }
}

TEST_CASE("train config validation") {
  TrainConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.epochs = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.thermal = Modality::kVisible;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("train config json round trip and unknown keys") {
  TrainConfig c = tiny_config();
  c.weights.supervised = false;
  c.gan_form = GanForm::kSaturating;
  c.network.attention = AttentionMode::kLiteral;
  c.thermal = Modality::kS0;
  const auto j = to_json(c);
  const TrainConfig back = train_config_from_json(j);
  CHECK(to_json(back) == j);

  auto bad = j;
  bad["learning_rate"] = 1;
  CHECK_THROWS_AS(train_config_from_json(bad), ConfigError);
  bad = j;
  bad["network"]["depth"] = 3;
  CHECK_THROWS_AS(train_config_from_json(bad), ConfigError);
  bad = j;
  bad["weights"]["lambda_gan"] = 1;
  CHECK_THROWS_AS(train_config_from_json(bad), ConfigError);
  bad = j;
  bad["batch_size"] = "eight";
  CHECK_THROWS_AS(train_config_from_json(bad), ConfigError);
}

TEST_CASE("one training step yields finite losses that satisfy the weighted sum") {
  const TrainConfig c = tiny_config();
  Trainer t(c);
  const LossRecord r = t.train_step(tiny_batch(c), 2e-4);
  for (double v : r.values()) CHECK(std::isfinite(v));
  CHECK(r.total_G == doctest::Approx(total_objective(r, c.weights)).epsilon(1e-12));
  CHECK(r.l1_v > 0);
  CHECK(r.total_D_v > 0);
  CHECK(t.step() == 1);
}

TEST_CASE("a step with the random extractor fills every feature term") {
  TrainConfig c = tiny_config();
  c.extractor.kind = "random";
  Trainer t(c);
  const LossRecord r = t.train_step(tiny_batch(c), 2e-4);
  CHECK(r.perc_v > 0);
  CHECK(r.id_t > 0);
  CHECK(r.total_G == doctest::Approx(total_objective(r, c.weights)).epsilon(1e-12));
}

TEST_CASE("training steps are deterministic") {
  const TrainConfig c = tiny_config();
  const Batch b = tiny_batch(c);
  Trainer a(c), bb(c);
  const LossRecord ra = a.train_step(b, 2e-4);
  const LossRecord rb = bb.train_step(b, 2e-4);
  CHECK(ra.values() == rb.values());
  CHECK(same_arrays(a.checkpoint(), bb.checkpoint()));
}

TEST_CASE("discriminator weights stay spectrally normalized after a step") {
  const TrainConfig c = tiny_config();
  Trainer t(c);
  t.train_step(tiny_batch(c), 2e-4);
  for (Discriminator* d : {&t.d_v(), &t.d_t()}) {
    for (const auto& nw : d->normalized_weights(50)) {
      const int rows = nw.weight.dim(0);
      const int cols = static_cast<int>(nw.weight.numel() / rows);
      Eigen::MatrixXd m(rows, cols);
      for (int r = 0; r < rows; ++r) {
        for (int k = 0; k < cols; ++k) m(r, k) = nw.weight[static_cast<std::size_t>(r) * cols + k];
      }
      const double sigma = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
      INFO(nw.name);
      CHECK(sigma <= 1.0 + 1e-2);
    }
  }
}

TEST_CASE("non-finite input surfaces as a divergence error") {
  const TrainConfig c = tiny_config();
  Trainer t(c);
  Batch b = tiny_batch(c);
  b.visible[0] = std::nanf("");
  try {
    t.train_step(b, 2e-4);
    FAIL("expected a divergence error");
  } catch (const DivergenceError& e) {
    CHECK(e.term() == "total_D_v");
  }
}

TEST_CASE("mismatched batch geometry is rejected") {
  const TrainConfig c = tiny_config();
  Trainer t(c);
  Batch b = tiny_batch(c);
  b.thermal = Tensor<float>(Shape{4, 3, 32, 32});
  CHECK_THROWS_AS(t.train_step(b, 2e-4), ShapeError);
}

TEST_CASE("unsupervised mode records zero paired terms") {
  TrainConfig c = tiny_config();
  c.weights.supervised = false;
  c.extractor.kind = "random";
  Trainer t(c);
  const LossRecord r = t.train_step(tiny_batch(c), 2e-4);
  CHECK(r.l1_v == 0);
  CHECK(r.l1_t == 0);
  CHECK(r.perc_v == 0);
  CHECK(r.perc_t == 0);
  CHECK(r.id_v == 0);
  CHECK(r.id_t == 0);
  CHECK(r.total_G == doctest::Approx(r.gan_v + r.gan_t + r.cycle).epsilon(1e-12));
}

TEST_CASE("fit writes interval checkpoints, a final one, and logs") {
  const TrainConfig c = tiny_config();  // 4 epochs, interval 3
  const fs::path dir = scratch_dir("fit");
  Trainer t(c);
  FitOptions opts;
  opts.out_dir = dir.string();
  const FitResult r = t.fit(tiny_catalog(), tiny_split(), opts);
  // ceil(4 / 3) interval checkpoints plus final.pfck.
  CHECK(r.checkpoints.size() == 3);
  CHECK(fs::exists(dir / "checkpoints" / "epoch_0003.pfck"));
  CHECK(fs::exists(dir / "checkpoints" / "epoch_0004.pfck"));
  CHECK(fs::exists(dir / "checkpoints" / "final.pfck"));
  CHECK(r.log.size() == 4);  // one batch of 4 pairs per epoch

  std::ifstream in(dir / "losses.csv");
  std::string header, line;
  std::getline(in, header);
  CHECK(header == loss_log_header());
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);

  const Archive ck = load_archive((dir / "checkpoints" / "final.pfck").string());
  Trainer resumed(ck);
  CHECK(resumed.epoch() == 4);
  CHECK(resumed.step() == 4);
  CHECK(same_arrays(resumed.checkpoint(), ck));
  fs::remove_all(dir);
}

TEST_CASE("no evaluation subject reaches a training step") {
  const TrainConfig c = tiny_config();
  const fs::path dir = scratch_dir("audit");
  const ProtocolSplit split = tiny_split();
  Trainer t(c);
  FitOptions opts;
  opts.out_dir = dir.string();
  const FitResult r = t.fit(tiny_catalog(), split, opts);
  const std::set<std::string> train(split.train_subjects.begin(), split.train_subjects.end());
  for (const auto& id : r.consumed_subjects) CHECK(train.count(id) == 1);
  std::ifstream in(dir / "audit.csv");
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream ss(line.substr(line.rfind(',') + 1));
    std::string id;
    while (std::getline(ss, id, ';')) CHECK(train.count(id) == 1);
  }
  fs::remove_all(dir);

  ProtocolSplit leaky = split;
  leaky.eval_subjects.push_back(split.train_subjects.front());
  Trainer t2(c);
  CHECK_THROWS_AS(t2.fit(tiny_catalog(), leaky), ConfigError);
}

TEST_CASE("interrupted and resumed training matches an uninterrupted run") {
  const TrainConfig c = tiny_config();
  const fs::path full_dir = scratch_dir("full"), part_dir = scratch_dir("part");
  Trainer full(c);
  FitOptions full_opts;
  full_opts.out_dir = full_dir.string();
  const FitResult full_r = full.fit(tiny_catalog(), tiny_split(), full_opts);

  Trainer first(c);
  FitOptions part_opts;
  part_opts.out_dir = part_dir.string();
  part_opts.stop_after_epoch = 3;
  first.fit(tiny_catalog(), tiny_split(), part_opts);
  CHECK(first.epoch() == 3);
  Trainer second(load_archive((part_dir / "checkpoints" / "epoch_0003.pfck").string()));
  part_opts.stop_after_epoch = -1;
  const FitResult rest = second.fit(tiny_catalog(), tiny_split(), part_opts);

  CHECK(same_arrays(full.checkpoint(), second.checkpoint()));
  REQUIRE(rest.log.size() == 1);
  CHECK(rest.log.back().losses.values() == full_r.log.back().losses.values());
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(slurp(full_dir / "losses.csv") == slurp(part_dir / "losses.csv"));
  fs::remove_all(full_dir);
  fs::remove_all(part_dir);
}

TEST_CASE("generators load from a checkpoint for evaluation") {
  const TrainConfig c = tiny_config();
  Trainer t(c);
  t.train_step(tiny_batch(c), 2e-4);
  const GeneratorPair g = load_generators(t.checkpoint());
  CHECK(to_json(g.config) == to_json(t.config()));
  const auto a = named_parameters(*g.t2v);
  const auto b = named_parameters(t.g_tv());
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    const auto& x = (*a[i].second)->value;
    const auto& y = (*b[i].second)->value;
    bool equal = x.numel() == y.numel();
    for (std::size_t k = 0; equal && k < x.numel(); ++k) equal = x[k] == y[k];
    CHECK(equal);
  }
}
