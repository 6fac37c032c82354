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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "polarface/data/catalog.hpp"

namespace polarface {

struct FixtureOptions {
  /// Range tags assigned round-robin to a subject's captures.
  std::vector<std::string> ranges = {"1"};
  /// The last this-many subjects belong to Volume II only.
  int volume_two_subjects = 0;
  /// Capture-to-capture variation: illumination gradient and highlight
  /// (luminance), colour cast, gradient and warm spot (chroma), and per-pixel
  /// Gaussian noise.
  double luminance_nuisance = 0.25;
  double chroma_nuisance = 0.25;
  double pixel_noise = 0.03;
};

using Matrix3 = std::array<std::array<double, 3>, 3>;

/// Per-pixel map from pseudo-visible (v0, v1, v2) to pseudo-thermal:
///   t0 = 0.4 * mean(v) + 0.3 * (v0 - v1)
///   t1 = (v0 - v1) / 2
///   t2 = (v0 + v1 - 2 v2) / 4
/// Its inverse, with Y = 2.5 t0 - 1.5 t1:
///   v0 = Y + t1 + 2 t2 / 3,  v1 = Y - t1 + 2 t2 / 3,  v2 = Y - 4 t2 / 3
const Matrix3& fixture_transform() noexcept;
const Matrix3& fixture_inverse_transform() noexcept;

/// Applies a channel-mixing matrix to every pixel of a 3-channel image.
FaceImage apply_pixel_transform(const FaceImage& img, const Matrix3& m, Modality result);

/// In-memory catalog of paired pseudo-visible / pseudo-polar faces. Identity
/// lives in subject-specific blobs: luminance "eyes" and marks dominate the
/// visible channels, chromatic "mouth" and cheek patterns dominate the
/// thermal ones. Captures vary in placement, illumination and noise.
/// Bit-deterministic in all arguments.
SubjectCatalog synth_fixture(int n_subjects, int images_per_subject, int image_size,
                             std::uint64_t seed, const FixtureOptions& options = {});

}  // namespace polarface
