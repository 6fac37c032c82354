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

#include "polarface/data/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "polarface/core/error.hpp"
#include "polarface/core/rng.hpp"

namespace polarface {

const Matrix3& fixture_transform() noexcept {
  static const Matrix3 m = {{{0.4 / 3 + 0.3, 0.4 / 3 - 0.3, 0.4 / 3},
                             {0.5, -0.5, 0.0},
                             {0.25, 0.25, -0.5}}};
  return m;
}

const Matrix3& fixture_inverse_transform() noexcept {
  static const Matrix3 m = {{{2.5, -0.5, 2.0 / 3}, {2.5, -2.5, 2.0 / 3}, {2.5, -1.5, -4.0 / 3}}};
  return m;
}

FaceImage apply_pixel_transform(const FaceImage& img, const Matrix3& m, Modality result) {
  if (img.channels() != 3) throw ShapeError("pixel transform needs a 3-channel image");
  FaceImage out = img;
  out.modality = result;
  const std::size_t plane = static_cast<std::size_t>(img.height()) * img.width();
  const float* src = img.pixels.data();
  float* dst = out.pixels.data();
  for (std::size_t i = 0; i < plane; ++i) {
    const double a = src[i], b = src[plane + i], c = src[2 * plane + i];
    for (int r = 0; r < 3; ++r) {
      dst[r * plane + i] = static_cast<float>(m[r][0] * a + m[r][1] * b + m[r][2] * c);
    }
  }
  return out;
}

namespace {

struct Blob {
  double x, y, rx, ry;
  double lum, chroma_a, chroma_b;
};

struct SubjectLook {
  double base_lum, base_a, base_b;
  double face_rx, face_ry;
  std::vector<Blob> blobs;
};

SubjectLook make_subject(Rng& rng) {
  SubjectLook s;
  s.base_lum = rng.uniform(-0.15, 0.25);
  s.base_a = rng.uniform(-0.1, 0.1);
  s.base_b = rng.uniform(-0.1, 0.1);
  s.face_rx = rng.uniform(0.30, 0.36);
  s.face_ry = rng.uniform(0.38, 0.45);
  // Eyes: a symmetric pair of dark luminance blobs.
  const double ey = rng.uniform(0.36, 0.46);
  const double spread = rng.uniform(0.12, 0.2);
  const double er = rng.uniform(0.08, 0.15);
  const double depth = -rng.uniform(0.35, 0.65);
  s.blobs.push_back({0.5 - spread, ey, er, er * rng.uniform(0.6, 1.0), depth, 0, 0});
  s.blobs.push_back({0.5 + spread, ey, er, s.blobs.back().ry, depth, 0, 0});
  // Luminance marks.
  for (int i = 0; i < 2; ++i) {
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double r = rng.uniform(0.06, 0.12);
    s.blobs.push_back({rng.uniform(0.3, 0.7), rng.uniform(0.25, 0.75), r, r,
                       sign * rng.uniform(0.2, 0.4), 0, 0});
  }
  // Mouth: an elongated chromatic blob.
  s.blobs.push_back({0.5 + rng.uniform(-0.03, 0.03), rng.uniform(0.68, 0.76),
                     rng.uniform(0.16, 0.32), rng.uniform(0.06, 0.1), 0,
                     rng.uniform(0.25, 0.45), rng.uniform(-0.15, 0.15)});
  // Cheeks: chromatic patches.
  for (int i = 0; i < 2; ++i) {
    const double r = rng.uniform(0.1, 0.18);
    s.blobs.push_back({i == 0 ? rng.uniform(0.25, 0.4) : rng.uniform(0.6, 0.75),
                       rng.uniform(0.5, 0.65), r, r, 0, rng.uniform(-0.25, 0.25),
                       rng.uniform(-0.25, 0.25)});
  }
  return s;
}

std::string subject_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%03d", i);
  return buf;
}

FaceImage render_visible(const SubjectLook& s, int size, const FixtureOptions& opt, Rng& rng) {
  const double dx = rng.uniform(-0.03, 0.03), dy = rng.uniform(-0.03, 0.03);
  const double scale = rng.uniform(0.95, 1.05);
  const double lum_amp = opt.luminance_nuisance, chroma_amp = opt.chroma_nuisance;
  const double grad_x = lum_amp * rng.uniform(-1, 1), grad_y = 0.6 * lum_amp * rng.uniform(-1, 1);
  const double bright = 0.4 * lum_amp * rng.uniform(-1, 1);
  const double cast_a = 0.3 * chroma_amp * rng.uniform(-1, 1), cast_b = 0.3 * chroma_amp * rng.uniform(-1, 1);
  const double top_a = chroma_amp * rng.uniform(-1, 1), top_b = chroma_amp * rng.uniform(-1, 1);
  // One capture-specific blob per channel group (a highlight and a warm spot).
  const Blob highlight{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), 0.08, 0.08,
                       lum_amp * rng.uniform(-1, 1), 0, 0};
  const Blob hot_spot{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), 0.08, 0.08, 0,
                      chroma_amp * rng.uniform(-1, 1), chroma_amp * rng.uniform(-1, 1)};
  const double noise = opt.pixel_noise;

  FaceImage img;
  img.modality = Modality::kVisible;
  img.pixels = Tensor<float>(Shape{3, size, size});
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  float* px = img.pixels.data();
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      // Face-centred coordinates after the capture's shift and scale.
      const double u = ((x + 0.5) / size - 0.5 - dx) / scale + 0.5;
      const double v = ((y + 0.5) / size - 0.52 - dy) / scale + 0.52;
      const double fx = (u - 0.5) / s.face_rx, fy = (v - 0.52) / s.face_ry;
      const double inside = 1.0 / (1.0 + std::exp((fx * fx + fy * fy - 1.0) * 12.0));
      double lum = -0.6 + inside * (s.base_lum + 0.6);
      double a = inside * s.base_a, b = inside * s.base_b;
      auto add_blob = [&](const Blob& blob) {
        const double bx = (u - blob.x) / blob.rx, by = (v - blob.y) / blob.ry;
        const double w = std::exp(-0.5 * (bx * bx + by * by)) * inside;
        lum += w * blob.lum;
        a += w * blob.chroma_a;
        b += w * blob.chroma_b;
      };
      for (const Blob& blob : s.blobs) add_blob(blob);
      add_blob(highlight);
      add_blob(hot_spot);
      const double px_u = (x + 0.5) / size - 0.5, px_v = (y + 0.5) / size - 0.5;
      lum += bright + grad_x * px_u + grad_y * px_v;
      a += cast_a + top_a * px_v;
      b += cast_b + top_b * px_u;
      const std::size_t i = static_cast<std::size_t>(y) * size + x;
      const double c0 = lum + a + 2.0 * b / 3 + noise * rng.normal();
      const double c1 = lum - a + 2.0 * b / 3 + noise * rng.normal();
      const double c2 = lum - 4.0 * b / 3 + noise * rng.normal();
      px[i] = static_cast<float>(std::clamp(c0, -1.0, 1.0));
      px[plane + i] = static_cast<float>(std::clamp(c1, -1.0, 1.0));
      px[2 * plane + i] = static_cast<float>(std::clamp(c2, -1.0, 1.0));
    }
  }
  return img;
}

}  // namespace

SubjectCatalog synth_fixture(int n_subjects, int images_per_subject, int image_size,
                             std::uint64_t seed, const FixtureOptions& options) {
  if (n_subjects < 2) throw ConfigError("fixture needs at least 2 subjects");
  if (images_per_subject < 1) throw ConfigError("fixture needs at least 1 image per subject");
  if (image_size < 32) throw ConfigError("fixture image_size must be at least 32");
  if (options.ranges.empty()) throw ConfigError("fixture needs at least one range tag");
  if (options.volume_two_subjects < 0 || options.volume_two_subjects > n_subjects) {
    throw ConfigError("fixture volume_two_subjects out of range");
  }
  SubjectCatalog catalog;
  for (int s = 0; s < n_subjects; ++s) {
    Rng subject_rng(derive_seed(seed, 2 * static_cast<std::uint64_t>(s)));
    const SubjectLook look = make_subject(subject_rng);
    const std::string id = subject_name(s);
    const Volume volume = s >= n_subjects - options.volume_two_subjects ? Volume::kII : Volume::kI;
    for (int c = 0; c < images_per_subject; ++c) {
      Rng capture_rng(derive_seed(derive_seed(seed, 2 * static_cast<std::uint64_t>(s) + 1), c));
      char capture[48];
      std::snprintf(capture, sizeof capture, "%s_c%02d", id.c_str(), c);
      const std::string range = options.ranges[c % options.ranges.size()];

      FaceImage visible = render_visible(look, image_size, options, capture_rng);
      visible.subject_id = id;
      visible.range_tag = range;
      visible.source_volume = volume;
      visible.capture_id = capture;
      FaceImage thermal = apply_pixel_transform(visible, fixture_transform(), Modality::kPolar);

      for (FaceImage* img : {&visible, &thermal}) {
        CatalogEntry e;
        e.subject_id = id;
        e.modality = img->modality;
        e.range_tag = range;
        e.volume = volume;
        e.capture_id = capture;
        e.path = id + "/" + capture + "_" + to_string(img->modality) + ".png";
        e.image = std::make_shared<const FaceImage>(std::move(*img));
        catalog.entries.push_back(std::move(e));
      }
    }
  }
  catalog.sort();
  catalog.validate();
  return catalog;
}

}  // namespace polarface
