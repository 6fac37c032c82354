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

// Portable archive of named float arrays plus a JSON manifest. Used for
// checkpoints and feature-extractor weights.
//
// Byte layout, all integers little-endian:
//   "PFCK"                      4-byte magic
//   u32  format version         (kArchiveVersion)
//   u64  manifest length M, then M bytes of UTF-8 JSON
//   u64  array count
//   per array, in name order:
//     u32 name length L, then L bytes of name
//     u8  element type          (1 = float32)
//     u32 rank R, then R x i64 dimensions
//     prod(dims) x float32 values
//   u64  FNV-1a 64 hash of every preceding byte

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "polarface/core/tensor.hpp"

namespace polarface {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct Archive {
  std::string manifest = "{}";
  std::map<std::string, Tensor<float>> arrays;

  const Tensor<float>& at(const std::string& name) const;
  bool contains(const std::string& name) const { return arrays.count(name) != 0; }
};

std::vector<std::uint8_t> serialize_archive(const Archive& archive);
/// Throws DecodeError on a bad magic, version, hash or truncated payload.
Archive deserialize_archive(std::span<const std::uint8_t> bytes);

void save_archive(const std::string& path, const Archive& archive);
Archive load_archive(const std::string& path);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) noexcept;

}  // namespace polarface
