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
#include <filesystem>
#include <set>

#include "doctest.h"
#include "polarface/core/error.hpp"
#include "polarface/core/rng.hpp"
#include "polarface/data/catalog.hpp"
#include "polarface/data/fixture.hpp"
#include "polarface/data/png.hpp"
#include "polarface/data/split.hpp"

using namespace polarface;

namespace {

FaceImage random_image(int c, int h, int w, Rng& rng, Modality m = Modality::kPolar) {
  FaceImage img;
  img.modality = m;
  img.pixels = Tensor<float>(Shape{c, h, w});
  for (std::size_t i = 0; i < img.pixels.numel(); ++i) {
    img.pixels[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  return img;
}

// Tent-kernel formulation of bilinear sampling at clamped half-pixel centres.
float reference_bilinear(const FaceImage& img, int c, double fy, double fx) {
  const int h = img.height(), w = img.width();
  fy = std::min(std::max(fy, 0.0), h - 1.0);
  fx = std::min(std::max(fx, 0.0), w - 1.0);
  double acc = 0;
  for (int r = static_cast<int>(fy) - 1; r <= static_cast<int>(fy) + 2; ++r) {
    if (r < 0 || r >= h) continue;
    const double ky = std::max(0.0, 1.0 - std::abs(fy - r));
    for (int q = static_cast<int>(fx) - 1; q <= static_cast<int>(fx) + 2; ++q) {
      if (q < 0 || q >= w) continue;
      const double kx = std::max(0.0, 1.0 - std::abs(fx - q));
      acc += ky * kx * img.pixels[(static_cast<std::size_t>(c) * h + r) * w + q];
    }
  }
  return static_cast<float>(acc);
}

SubjectCatalog volume_catalog(int vol1, int vol2) {
  FixtureOptions opt;
  opt.volume_two_subjects = vol2;
  return synth_fixture(vol1 + vol2, 1, 32, 5, opt);
}

}  // namespace

TEST_CASE("sample codec fixed points") {
  CHECK(encode_sample16(1.0f) == 65535);
  CHECK(encode_sample16(-1.0f) == 0);
  CHECK(encode_sample16(0.0f) == 32768);
  CHECK(encode_sample16(2.0f) == 65535);
  CHECK(decode_sample16(0) == -1.0f);
  CHECK(decode_sample16(65535) == 1.0f);
  CHECK(decode_sample8(255) == 1.0f);
  CHECK(decode_sample8(0) == -1.0f);
}

TEST_CASE("encode after decode is exact on every 16-bit sample") {
  for (int s = 0; s <= 65535; ++s) {
    REQUIRE(encode_sample16(decode_sample16(static_cast<std::uint16_t>(s))) == s);
  }
}

TEST_CASE("decode after encode stays within one quantization step") {
  Rng rng(3);
  for (int i = 0; i < 100000; ++i) {
    const float p = static_cast<float>(rng.uniform(-1.0, 1.0));
    REQUIRE(std::abs(decode_sample16(encode_sample16(p)) - p) <= 1.0 / 32767.5 + 1e-7);
  }
}

TEST_CASE("png round trip of polar, visible and s0 images") {
  Rng rng(11);
  for (Modality m : {Modality::kPolar, Modality::kVisible, Modality::kS0}) {
    FaceImage img = random_image(channel_count(m), 9, 13, rng, m);
    FaceImage back = decode_image(encode_image(img), m);
    REQUIRE(back.pixels.shape() == img.pixels.shape());
    for (std::size_t i = 0; i < img.pixels.numel(); ++i) {
      REQUIRE(back.pixels[i] == decode_sample16(encode_sample16(img.pixels[i])));
    }
  }
}

TEST_CASE("8-bit png decodes with the 127.5 mapping") {
  RawImage raw{4, 2, 1, 8, {0, 255, 128, 1, 2, 3, 4, 5}};
  FaceImage img = decode_image(encode_png(raw), Modality::kS0);
  CHECK(img.pixels[0] == -1.0f);
  CHECK(img.pixels[1] == 1.0f);
  CHECK(img.pixels[2] == doctest::Approx(128 / 127.5 - 1));
}

TEST_CASE("decode rejects channel mismatch and garbage") {
  Rng rng(1);
  const auto bytes = encode_image(random_image(1, 4, 4, rng, Modality::kS0));
  CHECK_THROWS_AS(decode_image(bytes, Modality::kPolar), ModalityMismatchError);
  std::vector<std::uint8_t> junk(64, 7);
  CHECK_THROWS_AS(decode_image(junk, Modality::kPolar), DecodeError);
}

TEST_CASE("full-image crop is the identity") {
  Rng rng(2);
  FaceImage img = random_image(3, 17, 17, rng);
  FaceImage out = crop_register(img, Box{0, 0, 17, 17}, 17);
  for (std::size_t i = 0; i < img.pixels.numel(); ++i) REQUIRE(out.pixels[i] == img.pixels[i]);
}

TEST_CASE("crop matches an independent bilinear resampler") {
  Rng rng(4);
  FaceImage img = random_image(3, 200, 200, rng);
  const Box box{50, 40, 150, 140};
  const int out_size = 224;
  FaceImage out = crop_register(img, box, out_size);
  CHECK(out.modality == img.modality);
  const double step = 100.0 / out_size;
  double worst = 0;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < out_size; ++i)
      for (int j = 0; j < out_size; ++j) {
        const float want = reference_bilinear(img, c, box.y0 + (i + 0.5) * step - 0.5,
                                              box.x0 + (j + 0.5) * step - 0.5);
        const float got = out.pixels[(static_cast<std::size_t>(c) * out_size + i) * out_size + j];
        worst = std::max(worst, static_cast<double>(std::abs(got - want)));
      }
  CHECK(worst <= 1e-6);
}

TEST_CASE("crop commutes with channel stacking") {
  Rng rng(8);
  FaceImage stack = random_image(3, 40, 30, rng);
  const Box box{3.5, 2.25, 27.0, 39.0};
  FaceImage whole = crop_register(stack, box, 21);
  const std::size_t in_plane = 40 * 30, out_plane = 21 * 21;
  for (int c = 0; c < 3; ++c) {
    FaceImage single;
    single.modality = Modality::kS0;
    single.pixels = Tensor<float>(Shape{1, 40, 30});
    std::copy(stack.pixels.data() + c * in_plane, stack.pixels.data() + (c + 1) * in_plane,
              single.pixels.data());
    FaceImage part = crop_register(single, box, 21);
    for (std::size_t i = 0; i < out_plane; ++i) {
      REQUIRE(part.pixels[i] == whole.pixels[c * out_plane + i]);
    }
  }
}

TEST_CASE("crop geometry errors") {
  Rng rng(9);
  FaceImage img = random_image(3, 20, 20, rng);
  CHECK_THROWS_AS(crop_register(img, Box{0, 0, 21, 20}, 16), GeometryError);
  CHECK_THROWS_AS(crop_register(img, Box{-1, 0, 10, 10}, 16), GeometryError);
  CHECK_THROWS_AS(crop_register(img, Box{5, 5, 5, 10}, 16), GeometryError);
  CHECK_THROWS_AS(crop_register(img, Box{0, 0, 20, 20}, 7), GeometryError);
}

TEST_CASE("image validation") {
  Rng rng(10);
  FaceImage img = random_image(1, 8, 8, rng, Modality::kPolar);
  CHECK_THROWS_AS(img.validate(), ModalityMismatchError);
  FaceImage bad = random_image(3, 8, 8, rng);
  bad.pixels[5] = 1.5f;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  FaceImage s0 = random_image(1, 8, 8, rng, Modality::kS0);
  FaceImage three = s0.as_three_channel();
  CHECK(three.channels() == 3);
  CHECK(three.pixels[2 * 64 + 9] == s0.pixels[9]);
}

TEST_CASE("fixture counts and pairing") {
  SubjectCatalog cat = synth_fixture(4, 2, 32, 1);
  int visible = 0, polar = 0;
  for (const auto& e : cat.entries) (e.modality == Modality::kVisible ? visible : polar)++;
  CHECK(visible == 8);
  CHECK(polar == 8);
  CHECK(cat.subjects().size() == 4);
  auto pairs = collect_pairs(cat, cat.subjects(), Modality::kPolar, 32);
  CHECK(pairs.size() == 8);
  for (const auto& p : pairs) CHECK(p.visible.capture_id == p.thermal.capture_id);
}

TEST_CASE("fixture is bit-deterministic per seed") {
  SubjectCatalog a = synth_fixture(3, 2, 48, 42);
  SubjectCatalog b = synth_fixture(3, 2, 48, 42);
  SubjectCatalog c = synth_fixture(3, 2, 48, 43);
  REQUIRE(a.entries.size() == b.entries.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    CHECK(encode_image(*a.entries[i].image) == encode_image(*b.entries[i].image));
    differs = differs || encode_image(*a.entries[i].image) != encode_image(*c.entries[i].image);
  }
  CHECK(differs);
}

TEST_CASE("inverse transform recovers the visible image") {
  SubjectCatalog cat = synth_fixture(2, 3, 40, 9);
  auto pairs = collect_pairs(cat, cat.subjects(), Modality::kPolar, 40);
  REQUIRE(pairs.size() == 6);
  for (const auto& p : pairs) {
    FaceImage back = apply_pixel_transform(p.thermal, fixture_inverse_transform(), Modality::kVisible);
    double worst = 0;
    for (std::size_t i = 0; i < back.pixels.numel(); ++i) {
      worst = std::max(worst, static_cast<double>(std::abs(back.pixels[i] - p.visible.pixels[i])));
    }
    CHECK(worst <= 1e-6);
    p.thermal.validate();
  }
  const auto& m = fixture_transform();
  const auto& inv = fixture_inverse_transform();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double s = 0;
      for (int k = 0; k < 3; ++k) s += inv[r][k] * m[k][c];
      CHECK(s == doctest::Approx(r == c ? 1.0 : 0.0).epsilon(1e-12));
    }
}

TEST_CASE("s0 pairs take the first stokes channel") {
  SubjectCatalog cat = synth_fixture(2, 1, 32, 3);
  auto polar = collect_pairs(cat, cat.subjects(), Modality::kPolar, 32);
  auto s0 = collect_pairs(cat, cat.subjects(), Modality::kS0, 32);
  REQUIRE(s0.size() == polar.size());
  const std::size_t plane = 32 * 32;
  for (std::size_t i = 0; i < plane; ++i) {
    REQUIRE(s0[0].thermal.pixels[i] == polar[0].thermal.pixels[i]);
    REQUIRE(s0[0].thermal.pixels[2 * plane + i] == polar[0].thermal.pixels[i]);
  }
}

TEST_CASE("protocol I split sizes and disjointness") {
  SubjectCatalog cat = volume_catalog(60, 0);
  ProtocolSplit s = build_split(cat, Protocol::kI, 1);
  CHECK(s.train_subjects.size() == 30);
  CHECK(s.eval_subjects.size() == 30);
  CHECK(s.train_range == "1");
  std::set<std::string> train(s.train_subjects.begin(), s.train_subjects.end());
  for (const auto& id : s.eval_subjects) CHECK(!train.count(id));
  ProtocolSplit again = build_split(cat, Protocol::kI, 1);
  CHECK(again.train_subjects == s.train_subjects);
  CHECK(again.eval_subjects == s.eval_subjects);
  ProtocolSplit other = build_split(cat, Protocol::kI, 2);
  CHECK(other.train_subjects != s.train_subjects);
}

TEST_CASE("protocol II evaluates on 26 unseen Volume-II subjects") {
  SubjectCatalog cat = volume_catalog(60, 51);
  ProtocolSplit s = build_split(cat, Protocol::kII, 3);
  CHECK(s.eval_subjects.size() == 26);
  CHECK(s.train_subjects.size() == 85);
  const auto vol2 = cat.subjects_in(Volume::kII);
  std::set<std::string> train(s.train_subjects.begin(), s.train_subjects.end());
  for (const auto& id : s.eval_subjects) {
    CHECK(vol2.count(id));
    CHECK(!train.count(id));
  }
}

TEST_CASE("insufficient subjects is a configuration error") {
  CHECK_THROWS_AS(build_split(volume_catalog(59, 0), Protocol::kI, 0), ConfigError);
  CHECK_THROWS_AS(build_split(volume_catalog(10, 50), Protocol::kII, 0), ConfigError);
  ProtocolCounts small{2, 2, 1, 1};
  CHECK(build_split(volume_catalog(4, 0), Protocol::kI, 0, small).eval_subjects.size() == 2);
  ProtocolCounts train_only{4, 0, 1, 1};
  ProtocolSplit t = build_split(volume_catalog(4, 0), Protocol::kI, 0, train_only);
  CHECK(t.train_subjects.size() == 4);
  CHECK(t.eval_subjects.empty());
  CHECK_THROWS_AS(build_split(volume_catalog(4, 0), Protocol::kI, 0, ProtocolCounts{0, 4, 1, 1}),
                  ConfigError);
  CHECK_THROWS_AS(build_split(volume_catalog(4, 0), Protocol::kI, 0, ProtocolCounts{2, -1, 1, 1}),
                  ConfigError);
  CHECK(parse_protocol("2") == Protocol::kII);
  CHECK_THROWS_AS(parse_protocol("3"), ConfigError);
}

TEST_CASE("manifest round trip through disk") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "polarface_manifest_test";
  fs::remove_all(dir);
  SubjectCatalog cat = synth_fixture(2, 2, 32, 6);
  cat.entries[0].box = Box{0, 0, 32, 32};
  cat.save_manifest((dir / "catalog.json").string());
  SubjectCatalog back = SubjectCatalog::load_manifest((dir / "catalog.json").string());
  REQUIRE(back.entries.size() == cat.entries.size());
  for (std::size_t i = 0; i < cat.entries.size(); ++i) {
    CHECK(back.entries[i].path == cat.entries[i].path);
    CHECK(back.entries[i].capture_id == cat.entries[i].capture_id);
    CHECK(back.entries[i].box == cat.entries[i].box);
    FaceImage disk = load_entry(back, back.entries[i], 32);
    FaceImage mem = load_entry(cat, cat.entries[i], 32);
    for (std::size_t k = 0; k < disk.pixels.numel(); ++k) {
      REQUIRE(std::abs(disk.pixels[k] - mem.pixels[k]) <= 1.0 / 32767.5);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("catalog validation") {
  SubjectCatalog cat = synth_fixture(2, 1, 32, 6);
  cat.entries.erase(cat.entries.begin());
  CHECK_THROWS_AS(cat.validate(), ConfigError);
  SubjectCatalog dup = synth_fixture(2, 1, 32, 6);
  dup.entries[1].path = dup.entries[0].path;
  CHECK_THROWS_AS(dup.validate(), ConfigError);
}
