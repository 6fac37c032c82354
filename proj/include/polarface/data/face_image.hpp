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
#include <span>
#include <string>
#include <vector>

#include "polarface/core/tensor.hpp"

namespace polarface {

/// Visible RGB, polarimetric thermal (S0, S1, S2 in that order), or S0 only.
enum class Modality { kVisible, kPolar, kS0 };
enum class Volume { kI, kII };

const char* to_string(Modality m) noexcept;
const char* to_string(Volume v) noexcept;
Modality parse_modality(const std::string& name);
Volume parse_volume(const std::string& name);
int channel_count(Modality m) noexcept;
/// Visible vs. either thermal representation.
bool is_thermal(Modality m) noexcept;

/// Pixels are stored channel-first [C, H, W] with values in [-1, 1].
struct FaceImage {
  Tensor<float> pixels;
  Modality modality = Modality::kVisible;
  std::string subject_id;
  std::string range_tag;
  Volume source_volume = Volume::kI;
  /// Images sharing a capture id were acquired together (a visible/thermal pair).
  std::string capture_id;

  int channels() const { return pixels.dim(0); }
  int height() const { return pixels.dim(1); }
  int width() const { return pixels.dim(2); }

  /// Throws ShapeError / DomainError on a channel-count or range violation.
  void validate() const;
  /// S0 replicated to three channels; other modalities are returned as is.
  FaceImage as_three_channel() const;
};

float decode_sample16(std::uint16_t v) noexcept;
float decode_sample8(std::uint8_t v) noexcept;
/// lround((p + 1) * 32767.5) clamped to [0, 65535]; half-way cases round away from zero.
std::uint16_t encode_sample16(float p) noexcept;

/// 8- or 16-bit PNG to an image of the given modality.
FaceImage decode_image(std::span<const std::uint8_t> png_bytes, Modality modality);
/// 16-bit PNG (gray for S0, RGB otherwise).
std::vector<std::uint8_t> encode_image(const FaceImage& img);

/// Axis-aligned box in continuous pixel coordinates; pixel (r, c) covers
/// [c, c+1) x [r, r+1).
struct Box {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool operator==(const Box&) const = default;
};

/// Bilinear resample of `box` to out_size x out_size with half-pixel
/// centers and edge clamping. Every channel uses the same sampling grid.
FaceImage crop_register(const FaceImage& img, const Box& box, int out_size);

/// Resample of the full image (nothing is cropped).
FaceImage resize_image(const FaceImage& img, int out_size);

}  // namespace polarface
