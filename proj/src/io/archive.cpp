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

#include "polarface/io/archive.hpp"

#include <bit>
#include <cstring>
#include <filesystem>

#include "polarface/core/error.hpp"
#include "polarface/data/png.hpp"

namespace polarface {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'P', 'F', 'C', 'K'};
constexpr std::uint8_t kFloat32 = 1;

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)), sizeof(T));
    return value;
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > data_.size() - pos_) throw DecodeError("archive truncated");
    const std::uint8_t* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor<float>& Archive::at(const std::string& name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw DecodeError("archive has no array '" + name + "'");
  return it->second;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::vector<std::uint8_t> serialize_archive(const Archive& archive) {
  Writer w;
  w.bytes(kMagic, 4);
  w.put<std::uint32_t>(kArchiveVersion);
  w.put<std::uint64_t>(archive.manifest.size());
  w.bytes(archive.manifest.data(), archive.manifest.size());
  w.put<std::uint64_t>(archive.arrays.size());
  for (const auto& [name, t] : archive.arrays) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.put<std::uint8_t>(kFloat32);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) w.put<std::int64_t>(d);
    w.bytes(t.data(), t.numel() * sizeof(float));
  }
  w.put<std::uint64_t>(fnv1a64(w.out));
  return std::move(w.out);
}

Archive deserialize_archive(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 + 4 + 8 + 8 + 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DecodeError("not a polarface archive");
  }
  const auto body = bytes.first(bytes.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 8);
  if (stored != fnv1a64(body)) throw DecodeError("archive hash mismatch (corrupt file)");

  Reader r(body);
  r.take(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kArchiveVersion) {
    throw DecodeError("unsupported archive version " + std::to_string(version));
  }
  Archive archive;
  const auto manifest_len = r.get<std::uint64_t>();
  const auto* m = r.take(manifest_len);
  archive.manifest.assign(reinterpret_cast<const char*>(m), manifest_len);
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    const auto* n = r.take(name_len);
    std::string name(reinterpret_cast<const char*>(n), name_len);
    if (r.get<std::uint8_t>() != kFloat32) throw DecodeError("unsupported element type in " + name);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw DecodeError("implausible rank in " + name);
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = r.get<std::int64_t>();
      if (dim < 0 || dim > (1ll << 31)) throw DecodeError("bad dimension in " + name);
      shape.push_back(static_cast<int>(dim));
      numel *= static_cast<std::size_t>(dim);
    }
    if (numel > (body.size() - r.position()) / sizeof(float)) throw DecodeError("archive truncated");
    Tensor<float> t(shape);
    std::memcpy(t.data(), r.take(numel * sizeof(float)), numel * sizeof(float));
    archive.arrays.emplace(std::move(name), std::move(t));
  }
  if (r.position() != body.size()) throw DecodeError("trailing bytes in archive");
  return archive;
}

void save_archive(const std::string& path, const Archive& archive) {
  // Write-then-rename so an interrupted save never leaves a torn file.
  const std::string tmp = path + ".tmp";
  write_file(tmp, serialize_archive(archive));
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

Archive load_archive(const std::string& path) { return deserialize_archive(read_file(path)); }

}  // namespace polarface
