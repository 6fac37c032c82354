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

namespace polarface {

/// Interleaved (row-major, channel-last) PNG samples at 8 or 16 bits.
struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 0;   // 1 (gray) or 3 (RGB); alpha is dropped on decode
  int bit_depth = 0;  // 8 or 16
  std::vector<std::uint16_t> samples;
};

/// Throws DecodeError on malformed input. Palette and low-bit gray images
/// expand to 8 bits; alpha channels are stripped.
RawImage decode_png(std::span<const std::uint8_t> bytes);

/// Encodes 1- or 3-channel samples at the image's bit depth.
std::vector<std::uint8_t> encode_png(const RawImage& image);

std::vector<std::uint8_t> encode_gray8_png(const std::vector<std::uint8_t>& pixels, int width,
                                           int height);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace polarface
