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

#include <cmath>
#include <limits>

#include "doctest.h"
#include "polarface/autograd/gradcheck.hpp"
#include "polarface/core/error.hpp"
#include "polarface/io/archive.hpp"
#include "polarface/objectives/features.hpp"
#include "polarface/objectives/losses.hpp"

using namespace polarface;

namespace {

Tensor<double> uniform(Shape shape, Rng& rng, double lo, double hi) {
  Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

double value(const Var<double>& v) { return v->value[0]; }

double clamped(double p) { return std::min(std::max(p, kLogEps), 1.0 - kLogEps); }

ConvStackSpec tiny_spec() {
  ConvStackSpec s;
  s.blocks = {{3}, {4}, {4}};
  s.mid_block = 0;
  s.deep_block = 2;
  s.fc_grid = 1;
  s.fc6 = 5;
  s.fc7 = 3;
  return s;
}

class MidOnlyExtractor final : public FeatureExtractor<double> {
 public:
  std::string identifier() const override { return "mid-only"; }
  bool has_tap(FeatureTap t) const override { return t == FeatureTap::kMid; }
  FeatureSet<double> extract(const Var<double>& x, bool, bool, bool) const override {
    return {x, nullptr, nullptr};
  }
};

}  // namespace

TEST_CASE("adversarial losses at a confused discriminator") {
  auto half = constant(Tensor<double>({2, 1, 6, 6}, 0.5));
  auto losses = adversarial_losses(half, half);
  CHECK(std::abs(value(losses.discriminator) - 2.0 * std::log(2.0)) <= 1e-9);
  CHECK(std::abs(value(losses.generator) - std::log(2.0)) <= 1e-9);
  auto sat = generator_adversarial_loss(half, GanForm::kSaturating);
  CHECK(std::abs(value(sat) + std::log(2.0)) <= 1e-9);
}

TEST_CASE("perfect discriminator drives its loss to zero") {
  auto real = constant(Tensor<double>({4}, 1.0 - kLogEps));
  auto fake = constant(Tensor<double>({4}, kLogEps));
  CHECK(value(discriminator_loss(real, fake)) < 1e-6);
  auto one = constant(Tensor<double>({4}, 1.0));
  auto zero = constant(Tensor<double>({4}, 0.0));
  const double at_bounds = value(discriminator_loss(one, zero));
  CHECK(std::isfinite(at_bounds));
  CHECK(at_bounds < 1e-6);
}

TEST_CASE("adversarial losses match an elementwise oracle") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    auto r = uniform({3, 1, 4, 4}, rng, 0.0, 1.0);
    auto f = uniform({3, 1, 4, 4}, rng, 0.0, 1.0);
    if (trial == 0) r[0] = 0.0, f[1] = 1.0;  // exercise the clamp
    double d = 0, g = 0, s = 0;
    for (std::size_t i = 0; i < r.numel(); ++i) {
      d += -std::log(clamped(r[i])) - std::log(1.0 - clamped(f[i]));
      g += -std::log(clamped(f[i]));
      s += std::log(1.0 - clamped(f[i]));
    }
    const double n = static_cast<double>(r.numel());
    auto losses = adversarial_losses(constant(r), constant(f));
    CHECK(value(losses.discriminator) == doctest::Approx(d / n).epsilon(1e-12));
    CHECK(std::abs(value(losses.generator) - g / n) <= 1e-9);
    CHECK(std::abs(value(generator_adversarial_loss(constant(f), GanForm::kSaturating)) - s / n) <= 1e-9);
  }
}

TEST_CASE("adversarial inputs outside the unit interval are domain errors") {
  auto ok = constant(Tensor<double>({2}, 0.5));
  CHECK_THROWS_AS(discriminator_loss(constant(Tensor<double>({2}, 1.5)), ok), DomainError);
  CHECK_THROWS_AS(discriminator_loss(ok, constant(Tensor<double>({2}, -0.1))), DomainError);
  CHECK_THROWS_AS(generator_adversarial_loss(
                      constant(Tensor<double>({2}, std::numeric_limits<double>::quiet_NaN()))),
                  DomainError);
}

TEST_CASE("l1 and cycle values") {
  Rng rng(22);
  auto x = uniform({2, 3, 4, 4}, rng, -1.0, 1.0);
  auto y = uniform({2, 3, 4, 4}, rng, -1.0, 1.0);
  CHECK(value(l1_loss(constant(x), constant(x))) == 0.0);
  Tensor<double> shifted = x;
  for (std::size_t i = 0; i < x.numel(); ++i) shifted[i] += 0.25;
  CHECK(value(l1_loss(constant(shifted), constant(x))) == doctest::Approx(0.25).epsilon(1e-12));
  double brute = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) brute += std::abs(x[i] - y[i]);
  CHECK(std::abs(value(l1_loss(constant(x), constant(y))) - brute / x.numel()) <= 1e-9);
  CHECK_THROWS_AS(l1_loss(constant(x), constant(Tensor<double>({2, 3, 4, 5}))), ShapeError);

  ImageMap<double> identity = [](const Var<double>& v) { return v; };
  CHECK(value(cycle_loss(constant(x), constant(y), identity, identity)) == 0.0);
  ImageMap<double> up = [](const Var<double>& v) {
    Tensor<double> t = v->value;
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] += 0.25;
    return constant(t);
  };
  CHECK(value(cycle_loss(constant(x), constant(y), up, up)) == doctest::Approx(1.0).epsilon(1e-12));
  ImageMap<double> a = [](const Var<double>& v) { return scale(v, 0.7); };
  ImageMap<double> b = [](const Var<double>& v) { return tanh(v); };
  CHECK(value(cycle_loss(constant(x), constant(y), a, b)) ==
        doctest::Approx(value(cycle_loss(constant(y), constant(x), b, a))).epsilon(1e-14));
}

TEST_CASE("total objective arithmetic") {
  LossRecord unit;
  unit.gan_v = unit.gan_t = unit.cycle = unit.l1_v = unit.l1_t = 1;
  unit.perc_v = unit.perc_t = unit.id_v = unit.id_t = 1;
  const LossWeights w;
  CHECK(std::abs(total_objective(unit, w) - 27.4) <= 1e-9);
  CHECK(total_objective(LossRecord{}, w) == 0.0);
  LossRecord twice = unit;
  twice.gan_v = twice.gan_t = twice.cycle = twice.l1_v = twice.l1_t = 2;
  twice.perc_v = twice.perc_t = twice.id_v = twice.id_t = 2;
  CHECK(total_objective(twice, w) == doctest::Approx(2 * 27.4).epsilon(1e-12));
  LossWeights unsup = w;
  unsup.supervised = false;
  CHECK(total_objective(unit, unsup) == 3.0);
  LossWeights bad;
  bad.lambda_identity = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(parse_gan_form("saturating") == GanForm::kSaturating);
  CHECK_THROWS_AS(parse_gan_form("hinge"), ConfigError);
}

TEST_CASE("feature losses") {
  Rng rng(23);
  auto x = uniform({2, 3, 8, 8}, rng, -1.0, 1.0);
  auto y = uniform({2, 3, 8, 8}, rng, -1.0, 1.0);
  ConvStackExtractor<double> ext(tiny_spec(), 3);
  auto same = feature_losses<double>(ext, constant(x), constant(x));
  CHECK(value(same.first) == 0.0);
  CHECK(value(same.second) == 0.0);
  PixelExtractor<double> pixel;
  auto pl = feature_losses<double>(pixel, constant(x), constant(y));
  CHECK(value(pl.first) == value(l1_loss(constant(x), constant(y))));
  MidOnlyExtractor partial;
  CHECK_THROWS_AS(feature_losses<double>(partial, constant(x), constant(y)), ConfigError);
  CHECK_THROWS_AS(partial.tap(constant(x), FeatureTap::kEmbedding), ConfigError);
}

TEST_CASE("default extractor taps at 224") {
  ConvStackExtractor<float> ext(ConvStackSpec{}, 1);
  NoGradGuard guard;
  auto f = ext.extract(constant(Tensor<float>({1, 3, 224, 224}, 0.1f)), true, true, true);
  CHECK(f.mid->value.shape() == Shape{1, 32, 112, 112});
  CHECK(f.deep->value.shape() == Shape{1, 64, 28, 28});
  CHECK(f.embedding->value.shape() == Shape{1, 128});
  CHECK(f.mid->value.numel() != f.deep->value.numel());
}

TEST_CASE("extractor archive round trip and determinism") {
  ConvStackExtractor<float> a(tiny_spec(), 9), b(tiny_spec(), 9), c(tiny_spec(), 10);
  ConvStackExtractor<float> loaded(deserialize_archive(serialize_archive(a.to_archive())));
  Rng rng(3);
  Tensor<float> x({2, 3, 8, 8});
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.uniform(-1, 1));
  NoGradGuard guard;
  auto ea = a.tap(constant(x), FeatureTap::kEmbedding)->value;
  auto eb = b.tap(constant(x), FeatureTap::kEmbedding)->value;
  auto ec = c.tap(constant(x), FeatureTap::kEmbedding)->value;
  auto el = loaded.tap(constant(x), FeatureTap::kEmbedding)->value;
  bool differs = false;
  for (std::size_t i = 0; i < ea.numel(); ++i) {
    CHECK(ea[i] == eb[i]);
    CHECK(ea[i] == el[i]);
    differs = differs || ea[i] != ec[i];
  }
  CHECK(differs);
  Archive broken = a.to_archive();
  broken.arrays.erase("fc7.bias");
  CHECK_THROWS_AS(ConvStackExtractor<float>{broken}, DecodeError);
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(24);
  auto p = uniform({2, 1, 3, 3}, rng, 0.05, 0.95);
  auto q = uniform({2, 1, 3, 3}, rng, 0.05, 0.95);
  auto d = grad_check([](const std::vector<Var<double>>& v) { return discriminator_loss(v[0], v[1]); },
                      {p, q});
  CHECK(d.max_relative_error < 1e-4);
  for (GanForm form : {GanForm::kNonSaturating, GanForm::kSaturating}) {
    auto g = grad_check(
        [form](const std::vector<Var<double>>& v) { return generator_adversarial_loss(v[0], form); }, {q});
    CHECK(g.max_relative_error < 1e-4);
  }
  // Offsets keep |a - b| away from the kink at zero.
  auto x = uniform({1, 3, 8, 8}, rng, -1.0, 1.0);
  Tensor<double> y = x;
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += (i % 2 ? 0.3 : -0.3) + rng.uniform(-0.1, 0.1);
  auto l1 = grad_check([](const std::vector<Var<double>>& v) { return l1_loss(v[0], v[1]); }, {x, y});
  CHECK(l1.max_relative_error < 1e-4);

  auto w1 = uniform({3, 3, 3, 3}, rng, -0.3, 0.3);
  auto w2 = uniform({3, 3, 3, 3}, rng, -0.3, 0.3);
  auto cyc = grad_check(
      [](const std::vector<Var<double>>& v) {
        ImageMap<double> g_tv = [&](const Var<double>& in) { return tanh(conv2d(in, v[2], Var<double>(), 1, 1)); };
        ImageMap<double> g_vt = [&](const Var<double>& in) { return tanh(conv2d(in, v[3], Var<double>(), 1, 1)); };
        return cycle_loss(v[0], v[1], g_tv, g_vt);
      },
      {x, y, w1, w2});
  CHECK(cyc.max_relative_error < 1e-4);

  ConvStackExtractor<double> ext(tiny_spec(), 5);
  for (int which : {0, 1}) {
    auto f = grad_check(
        [&](const std::vector<Var<double>>& v) {
          auto losses = feature_losses(ext, v[0], constant(y));
          return which == 0 ? losses.first : losses.second;
        },
        {x});
    CHECK(f.max_relative_error < 1e-4);
  }
}

TEST_CASE("archive container") {
  Archive a;
  a.manifest = R"({"epoch": 3})";
  a.arrays["b"] = Tensor<float>({2, 3}, 1.5f);
  a.arrays["a"] = Tensor<float>({4}, -2.0f);
  a.arrays["empty"] = Tensor<float>(Shape{0});
  auto bytes = serialize_archive(a);
  CHECK(bytes[0] == 'P');
  CHECK(bytes[3] == 'K');
  Archive back = deserialize_archive(bytes);
  CHECK(back.manifest == a.manifest);
  REQUIRE(back.arrays.size() == 3);
  CHECK(back.at("b").shape() == Shape{2, 3});
  CHECK(back.at("b")[5] == 1.5f);
  CHECK(back.at("a")[0] == -2.0f);
  CHECK(serialize_archive(back) == bytes);
  auto corrupt = bytes;
  corrupt[20] ^= 1;
  CHECK_THROWS_AS(deserialize_archive(corrupt), DecodeError);
  CHECK_THROWS_AS(deserialize_archive(std::span(bytes).first(bytes.size() - 3)), DecodeError);
  CHECK_THROWS_AS(back.at("missing"), DecodeError);
}
