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

#include "polarface/data/face_image.hpp"

#include <algorithm>
#include <cmath>

#include "polarface/core/error.hpp"
#include "polarface/data/png.hpp"

namespace polarface {

const char* to_string(Modality m) noexcept {
  switch (m) {
    case Modality::kVisible: return "visible";
    case Modality::kPolar: return "polar";
    case Modality::kS0: return "s0";
  }
  return "?";
}

const char* to_string(Volume v) noexcept { return v == Volume::kI ? "I" : "II"; }

Modality parse_modality(const std::string& name) {
  if (name == "visible") return Modality::kVisible;
  if (name == "polar") return Modality::kPolar;
  if (name == "s0") return Modality::kS0;
  throw ConfigError("unknown modality '" + name + "'");
}

Volume parse_volume(const std::string& name) {
  if (name == "I" || name == "1") return Volume::kI;
  if (name == "II" || name == "2") return Volume::kII;
  throw ConfigError("unknown volume '" + name + "'");
}

int channel_count(Modality m) noexcept { return m == Modality::kS0 ? 1 : 3; }

bool is_thermal(Modality m) noexcept { return m != Modality::kVisible; }

void FaceImage::validate() const {
  require_rank(pixels.shape(), 3, "face image");
  if (channels() != channel_count(modality)) {
    throw ModalityMismatchError(std::string(to_string(modality)) + " image needs " +
                                std::to_string(channel_count(modality)) + " channels, has " +
                                std::to_string(channels()));
  }
  for (std::size_t i = 0; i < pixels.numel(); ++i) {
    const float v = pixels[i];
    if (!(v >= -1.0f && v <= 1.0f)) throw DomainError("pixel outside [-1, 1]: " + std::to_string(v));
  }
}

FaceImage FaceImage::as_three_channel() const {
  if (modality != Modality::kS0 || channels() == 3) return *this;
  FaceImage out = *this;
  const std::size_t plane = static_cast<std::size_t>(height()) * width();
  out.pixels = Tensor<float>(Shape{3, height(), width()});
  for (int c = 0; c < 3; ++c) {
    std::copy(pixels.data(), pixels.data() + plane, out.pixels.data() + c * plane);
  }
  return out;
}

float decode_sample16(std::uint16_t v) noexcept {
  return static_cast<float>(static_cast<double>(v) / 32767.5 - 1.0);
}

float decode_sample8(std::uint8_t v) noexcept {
  return static_cast<float>(static_cast<double>(v) / 127.5 - 1.0);
}

std::uint16_t encode_sample16(float p) noexcept {
  const long q = std::lround((static_cast<double>(p) + 1.0) * 32767.5);
  return static_cast<std::uint16_t>(std::clamp<long>(q, 0, 65535));
}

FaceImage decode_image(std::span<const std::uint8_t> png_bytes, Modality modality) {
  RawImage raw = decode_png(png_bytes);
  if (raw.channels != channel_count(modality)) {
    throw ModalityMismatchError(std::string(to_string(modality)) + " expects " +
                                std::to_string(channel_count(modality)) +
                                "-channel PNG, got " + std::to_string(raw.channels));
  }
  FaceImage img;
  img.modality = modality;
  img.pixels = Tensor<float>(Shape{raw.channels, raw.height, raw.width});
  const std::size_t plane = static_cast<std::size_t>(raw.width) * raw.height;
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < raw.channels; ++c) {
      const std::uint16_t v = raw.samples[p * raw.channels + c];
      img.pixels[c * plane + p] =
          raw.bit_depth == 16 ? decode_sample16(v) : decode_sample8(static_cast<std::uint8_t>(v));
    }
  }
  return img;
}

std::vector<std::uint8_t> encode_image(const FaceImage& img) {
  img.validate();
  RawImage raw;
  raw.width = img.width();
  raw.height = img.height();
  raw.channels = img.channels();
  raw.bit_depth = 16;
  const std::size_t plane = static_cast<std::size_t>(raw.width) * raw.height;
  raw.samples.resize(plane * raw.channels);
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < raw.channels; ++c) {
      raw.samples[p * raw.channels + c] = encode_sample16(img.pixels[c * plane + p]);
    }
  }
  return encode_png(raw);
}

FaceImage crop_register(const FaceImage& img, const Box& box, int out_size) {
  require_rank(img.pixels.shape(), 3, "crop input");
  const int h = img.height(), w = img.width(), channels = img.channels();
  if (out_size < 8) throw GeometryError("crop output size must be at least 8");
  if (!(box.x0 >= 0 && box.y0 >= 0 && box.x1 <= w && box.y1 <= h && box.x1 > box.x0 &&
        box.y1 > box.y0)) {
    throw GeometryError("box [" + std::to_string(box.x0) + ", " + std::to_string(box.y0) + ", " +
                        std::to_string(box.x1) + ", " + std::to_string(box.y1) +
                        "] outside a " + std::to_string(w) + "x" + std::to_string(h) + " image");
  }
  FaceImage out = img;
  out.pixels = Tensor<float>(Shape{channels, out_size, out_size});
  const double sx = (box.x1 - box.x0) / out_size, sy = (box.y1 - box.y0) / out_size;
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(out_size) * out_size;
  for (int i = 0; i < out_size; ++i) {
    const double fy = std::clamp(box.y0 + (i + 0.5) * sy - 0.5, 0.0, h - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int j = 0; j < out_size; ++j) {
      const double fx = std::clamp(box.x0 + (j + 0.5) * sx - 0.5, 0.0, w - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      for (int c = 0; c < channels; ++c) {
        const float* p = img.pixels.data() + c * in_plane;
        const double top = p[y0 * w + x0] * (1.0 - wx) + p[y0 * w + x1] * wx;
        const double bottom = p[y1 * w + x0] * (1.0 - wx) + p[y1 * w + x1] * wx;
        out.pixels[c * out_plane + static_cast<std::size_t>(i) * out_size + j] =
            static_cast<float>(top * (1.0 - wy) + bottom * wy);
      }
    }
  }
  return out;
}

FaceImage resize_image(const FaceImage& img, int out_size) {
  if (img.height() == out_size && img.width() == out_size) return img;
  return crop_register(img, Box{0, 0, static_cast<double>(img.width()), static_cast<double>(img.height())},
                       out_size);
}

}  // namespace polarface
