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


#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "doctest.h"
#include "polarface/core/error.hpp"
#include "polarface/core/rng.hpp"
#include "polarface/data/fixture.hpp"
#include "polarface/verification/verification.hpp"

using namespace polarface;
namespace fs = std::filesystem;

namespace {

Template tpl(std::vector<double> v, std::string subject) {
  Template t;
  t.vector = std::move(v);
  t.subject_id = std::move(subject);
  return t;
}

// P(g > i) + 0.5 P(g = i) over every genuine/impostor pair.
double brute_auc(const std::vector<double>& g, const std::vector<double>& im) {
  double wins = 0;
  for (double a : g) {
    for (double b : im) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  }
  return wins / (static_cast<double>(g.size()) * im.size());
}

std::vector<double> scores(Rng& rng, int n, double shift, bool coarse) {
  std::vector<double> s(n);
  for (auto& x : s) {
    x = rng.normal() + shift;
    if (coarse) x = std::round(x * 4) / 4;  // forces ties
  }
  return s;
}

EvalConfig small_eval() {
  EvalConfig e;
  e.counts.protocol1_train = 4;
  e.counts.protocol1_eval = 4;
  e.trials = 2;
  e.image_size = 64;
  e.extractor.kind = "pixel";
  e.seed = 9;
  return e;
}

const SubjectCatalog& small_catalog() {
  static const SubjectCatalog catalog = synth_fixture(8, 2, 64, 2);
  return catalog;
}

NetworkConfig tiny_network() {
  NetworkConfig n;
  n.image_size = 64;
  n.base_channels = 4;
  n.attention_cap = 256;
  return n;
}

}  // namespace

TEST_CASE("cosine similarity examples") {
  const std::vector<double> a{1, 2, 2}, b{2, 1, 2}, x{1, 0, 0}, y{0, 3, 0};
  CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_similarity(x, y) == 0.0);
  CHECK(cosine_similarity(a, b) == doctest::Approx(8.0 / 9.0).epsilon(1e-15));
  const std::vector<double> zero{0, 0, 0}, short_v{1, 2};
  CHECK_THROWS_AS(cosine_similarity(a, zero), DegenerateTemplateError);
  CHECK_THROWS_AS(cosine_similarity(a, short_v), ConfigError);
}

TEST_CASE("cosine similarity is symmetric, scale invariant and bounded") {
  Rng rng(4);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> a(7), b(7);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    const double c = rng.uniform(0.01, 100);
    std::vector<double> ca = a;
    for (auto& v : ca) v *= c;
    const double s = cosine_similarity(a, b);
    CHECK(s == doctest::Approx(cosine_similarity(b, a)).epsilon(1e-14));
    CHECK(s == doctest::Approx(cosine_similarity(ca, b)).epsilon(1e-12));
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
  }
}

TEST_CASE("template examples") {
  const std::vector<float> f{1, 3}, f_hat{3, 1};
  const auto same = make_template(f, f, VerifyMode::kFusion, Side::kGallery);
  CHECK(same.vector == std::vector<double>{1, 3});
  const auto fused = make_template(f, f_hat, VerifyMode::kFusion, Side::kProbe);
  CHECK(fused.vector == std::vector<double>{2, 2});
  const auto swapped = make_template(f_hat, f, VerifyMode::kFusion, Side::kProbe);
  CHECK(swapped.vector == fused.vector);

  const std::vector<float> other{-5, 7};
  CHECK(make_template(f, f_hat, VerifyMode::kRaw, Side::kGallery).vector ==
        make_template(f, other, VerifyMode::kRaw, Side::kGallery).vector);
  CHECK(make_template(f, {}, VerifyMode::kRaw, Side::kProbe).vector == std::vector<double>{1, 3});

  // Unimodal modes keep the feature that lives in the matching domain.
  CHECK(make_template(f, f_hat, VerifyMode::kPolar2Vis, Side::kGallery).vector ==
        std::vector<double>{1, 3});
  CHECK(make_template(f, f_hat, VerifyMode::kPolar2Vis, Side::kProbe).vector ==
        std::vector<double>{3, 1});
  CHECK(make_template(f, f_hat, VerifyMode::kVis2Polar, Side::kGallery).vector ==
        std::vector<double>{3, 1});
  CHECK(make_template(f, f_hat, VerifyMode::kVis2Polar, Side::kProbe).vector ==
        std::vector<double>{1, 3});
  CHECK_THROWS_AS(make_template(f, {}, VerifyMode::kPolar2Vis, Side::kProbe), ConfigError);
  const std::vector<float> wide{1, 2, 3};
  CHECK_THROWS_AS(make_template(f, wide, VerifyMode::kFusion, Side::kProbe), ConfigError);
}

TEST_CASE("normalized fusion averages unit features") {
  const std::vector<float> f{3, 4}, f_hat{0, 2};
  const auto t = make_template(f, f_hat, VerifyMode::kFusion, Side::kGallery, true);
  CHECK(t.vector[0] == doctest::Approx(0.3));
  CHECK(t.vector[1] == doctest::Approx(0.9));
}

TEST_CASE("score matrix shape, labels and values") {
  std::vector<Template> probes{tpl({1, 0}, "a"), tpl({0, 1}, "b"), tpl({1, 1}, "a")};
  std::vector<Template> gallery{tpl({1, 0}, "a"), tpl({1, 2}, "b"), tpl({2, 1}, "c"),
                                tpl({-1, 0}, "a")};
  const ScoreMatrix m = score_matrix(probes, gallery);
  CHECK(m.probes == 3);
  CHECK(m.gallery == 4);
  CHECK(m.scores.size() == 12);
  for (int p = 0; p < 3; ++p) {
    for (int g = 0; g < 4; ++g) {
      const std::size_t k = static_cast<std::size_t>(p) * 4 + g;
      CHECK(m.score(p, g) == doctest::Approx(cosine_similarity(probes[p], gallery[g])));
      CHECK(m.genuine[k] == (probes[p].subject_id == gallery[g].subject_id));
      CHECK(m.counted[k] == 1);
    }
  }
  CHECK(m.score(0, 3) == doctest::Approx(-1.0));
  CHECK(m.score(2, 1) == doctest::Approx(3.0 / std::sqrt(10.0)));

  const ScoreMatrix same = score_matrix({tpl({1, 2}, "a")}, {tpl({2, 1}, "a"), tpl({1, 1}, "a")});
  CHECK(std::all_of(same.genuine.begin(), same.genuine.end(), [](auto g) { return g == 1; }));
  CHECK_THROWS_AS(roc_auc_eer(same), UndefinedMetricError);
}

TEST_CASE("roc examples") {
  const std::vector<double> g1{0.9, 0.8}, i1{0.1, 0.2};
  const ROCResult perfect = roc_auc_eer(g1, i1);
  CHECK(perfect.auc == 1.0);
  CHECK(perfect.eer == 0.0);

  const std::vector<double> g2{0.8, 0.4}, i2{0.6, 0.2};
  const ROCResult r = roc_auc_eer(g2, i2);
  CHECK(r.auc == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(r.eer == doctest::Approx(0.5).epsilon(1e-12));

  const std::vector<double> none;
  CHECK_THROWS_AS(roc_auc_eer(g2, none), UndefinedMetricError);
  CHECK_THROWS_AS(roc_auc_eer(none, i2), UndefinedMetricError);
}

TEST_CASE("roc agrees with brute-force counting on random score sets") {
  Rng rng(17);
  for (int k = 0; k < 300; ++k) {
    const bool coarse = k % 3 == 0;
    const auto g = scores(rng, 5 + static_cast<int>(rng.uniform() * 60), rng.uniform(-1, 2), coarse);
    const auto im = scores(rng, 5 + static_cast<int>(rng.uniform() * 60), 0.0, coarse);
    const ROCResult r = roc_auc_eer(g, im);
    CHECK(std::abs(r.auc - brute_auc(g, im)) <= 1e-9);
    CHECK(std::abs(r.eer_fpr - r.eer_fnr) <= 1e-9);
    CHECK(r.eer >= 0.0);
    CHECK(r.eer <= 1.0);

    // Points run from (0,0) to (1,1) with non-decreasing rates; their
    // trapezoid area is the reported AUC.
    REQUIRE(r.points.size() >= 2);
    CHECK(r.points.front().fpr == 0.0);
    CHECK(r.points.front().tpr == 0.0);
    CHECK(r.points.back().fpr == 1.0);
    CHECK(r.points.back().tpr == 1.0);
    double area = 0;
    for (std::size_t p = 1; p < r.points.size(); ++p) {
      CHECK(r.points[p].fpr >= r.points[p - 1].fpr);
      CHECK(r.points[p].tpr >= r.points[p - 1].tpr);
      area += (r.points[p].fpr - r.points[p - 1].fpr) * (r.points[p].tpr + r.points[p - 1].tpr) / 2;
    }
    CHECK(std::abs(area - r.auc) <= 1e-9);

    // Negating every score mirrors the curve.
    std::vector<double> ng = g, ni = im;
    for (auto& x : ng) x = -x;
    for (auto& x : ni) x = -x;
    CHECK(std::abs(roc_auc_eer(ng, ni).auc - (1.0 - r.auc)) <= 1e-9);

    const bool separated = *std::min_element(g.begin(), g.end()) > *std::max_element(im.begin(), im.end());
    CHECK((r.eer == 0.0) == separated);
    CHECK((r.auc == 1.0) == separated);
  }
}

TEST_CASE("metrics are invariant under positive template rescaling") {
  Rng rng(8);
  std::vector<Template> probes, gallery, scaled;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> p(4), g(4);
    for (auto& v : p) v = rng.normal();
    for (auto& v : g) v = rng.normal();
    probes.push_back(tpl(p, "s" + std::to_string(i % 3)));
    gallery.push_back(tpl(g, "s" + std::to_string(i % 3)));
    const double c = rng.uniform(0.1, 10);
    for (auto& v : g) v *= c;
    scaled.push_back(tpl(g, "s" + std::to_string(i % 3)));
  }
  const ROCResult a = roc_auc_eer(score_matrix(probes, gallery));
  const ROCResult b = roc_auc_eer(score_matrix(probes, scaled));
  CHECK(a.auc == doctest::Approx(b.auc).epsilon(1e-12));
  CHECK(a.eer == doctest::Approx(b.eer).epsilon(1e-12));
}

TEST_CASE("excluded pairs do not enter the metrics") {
  ScoreMatrix m = score_matrix({tpl({1, 0}, "a"), tpl({0, 1}, "b")}, {tpl({1, 0}, "a"), tpl({0, 1}, "b")});
  // Counting only the two impostor pairs and the second genuine pair.
  m.counted[0] = 0;
  m.scores[3] = -1;  // genuine (b, b) now scores below both impostors
  const ROCResult r = roc_auc_eer(m);
  CHECK(r.auc == 0.0);
}

TEST_CASE("raw protocol never invokes the generator") {
  int calls = 0;
  GeneratorSource source = [&](int, const ProtocolSplit&) -> GeneratorPair& {
    ++calls;
    throw ConfigError("raw mode must not ask for generators");
  };
  const EvalConfig e = small_eval();
  const EvalReport r = run_protocol(source, small_catalog(), e, VerifyMode::kRaw);
  CHECK(calls == 0);
  REQUIRE(r.trials.size() == 2);
  for (const auto& t : r.trials) {
    CHECK(t.auc >= 0.0);
    CHECK(t.auc <= 1.0);
    CHECK(t.scores.probes == 8);  // 4 subjects x 2 captures
    for (int i = 0; i < t.scores.probes; ++i) {
      CHECK(t.scores.counted[static_cast<std::size_t>(i) * t.scores.gallery + i] == 0);
    }
  }
  const double mean = (r.trials[0].auc + r.trials[1].auc) / 2;
  CHECK(r.auc_mean == doctest::Approx(mean));
  // Sample standard deviation over trials.
  CHECK(r.auc_std == doctest::Approx(std::abs(r.trials[0].auc - r.trials[1].auc) / std::sqrt(2.0)));

  const auto j = r.to_json();
  CHECK(j.at("mode") == "raw");
  CHECK(j.at("trials").size() == 2);
  for (const char* k : {"auc_mean", "auc_std", "eer_mean", "eer_std"}) CHECK(j.at("aggregate").contains(k));

  const fs::path dir = fs::temp_directory_path() / "polarface_test_report";
  fs::remove_all(dir);
  r.write(dir.string());
  CHECK(fs::exists(dir / "report.json"));
  CHECK(fs::exists(dir / "roc_trial0.csv"));
  CHECK(fs::exists(dir / "scores_trial1.csv"));
  fs::remove_all(dir);
}

TEST_CASE("ablation modes share one generator request per trial") {
  std::map<int, GeneratorPair> cache;
  int calls = 0;
  std::vector<std::vector<std::string>> seen_train;
  GeneratorSource source = [&](int trial, const ProtocolSplit& split) -> GeneratorPair& {
    ++calls;
    seen_train.push_back(split.train_subjects);
    GeneratorPair& g = cache[trial];
    g.t2v = std::make_unique<Generator>(tiny_network(), 1);
    g.v2t = std::make_unique<Generator>(tiny_network(), 2);
    return g;
  };
  const EvalConfig e = small_eval();
  const auto reports = run_protocol(source, small_catalog(), e,
                                    {VerifyMode::kPolar2Vis, VerifyMode::kVis2Polar, VerifyMode::kFusion});
  CHECK(calls == 2);
  REQUIRE(reports.size() == 3);
  CHECK(reports[0].mode == VerifyMode::kPolar2Vis);
  CHECK(reports[2].mode == VerifyMode::kFusion);
  for (const auto& r : reports) {
    CHECK(r.trials.size() == 2);
    CHECK(std::isfinite(r.auc_mean));
  }
  CHECK(seen_train[0] != seen_train[1]);
}

TEST_CASE("evaluation splits depend only on the trial seed") {
  const EvalConfig e = small_eval();
  GeneratorSource unused = [](int, const ProtocolSplit&) -> GeneratorPair& {
    throw ConfigError("unused");
  };
  const EvalReport a = run_protocol(unused, small_catalog(), e, VerifyMode::kRaw);
  const EvalReport b = run_protocol(unused, small_catalog(), e, VerifyMode::kRaw);
  CHECK(a.to_json() == b.to_json());
  CHECK(a.trials[0].trial_seed == derive_seed(e.seed, 0));
  CHECK(a.trials[1].trial_seed == derive_seed(e.seed, 1));
}

TEST_CASE("translation keeps image geometry and range") {
  Generator g(tiny_network(), 3);
  const auto pairs = collect_pairs(small_catalog(), {"s000"}, Modality::kPolar, 64);
  std::vector<FaceImage> thermal;
  for (const auto& p : pairs) thermal.push_back(p.thermal);
  const auto out = translate(g, thermal, Modality::kVisible, 1);
  REQUIRE(out.size() == thermal.size());
  for (const auto& img : out) {
    CHECK(img.modality == Modality::kVisible);
    CHECK(img.pixels.shape() == Shape{3, 64, 64});
    CHECK_NOTHROW(img.validate());
  }
  // Batching does not change the result.
  const auto batched = translate(g, thermal, Modality::kVisible, 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    bool equal = true;
    for (std::size_t k = 0; k < out[i].pixels.numel(); ++k) {
      equal = equal && std::abs(out[i].pixels[k] - batched[i].pixels[k]) <= 1e-5f;
    }
    CHECK(equal);
  }
}
