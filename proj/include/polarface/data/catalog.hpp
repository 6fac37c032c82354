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

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "polarface/data/face_image.hpp"

namespace polarface {

struct CatalogEntry {
  std::string subject_id;
  Modality modality = Modality::kVisible;
  std::string range_tag;
  Volume volume = Volume::kI;
  /// Unique key; a file path relative to the manifest for on-disk entries.
  std::string path;
  std::optional<Box> box;
  /// Shared by the visible and thermal images of one acquisition.
  std::string capture_id;
  /// Set for in-memory catalogs (fixtures); takes precedence over `path`.
  std::shared_ptr<const FaceImage> image;
};

class SubjectCatalog {
 public:
  std::vector<CatalogEntry> entries;
  /// Directory that relative entry paths resolve against.
  std::string root;

  /// Every subject needs a visible and a thermal entry; paths must be unique.
  void validate() const;
  /// Canonical order: subject, capture, modality, path.
  void sort();
  std::vector<std::string> subjects() const;
  std::set<std::string> subjects_in(Volume volume) const;

  static SubjectCatalog load_manifest(const std::string& manifest_path);
  /// Writes the manifest; in-memory images are encoded as 16-bit PNGs next to it.
  void save_manifest(const std::string& manifest_path) const;
};

/// Decoded, registered (box crop or full-frame resize) image at image_size.
FaceImage load_entry(const SubjectCatalog& catalog, const CatalogEntry& entry, int image_size);

/// A visible/thermal acquisition of one subject.
struct ImagePair {
  FaceImage visible;
  FaceImage thermal;  // three channels (S0 replicated when needed)
};

/// Pairs visible and thermal entries of the given subjects by capture id
/// (falling back to order within subject and range), optionally limited to
/// one range tag. `thermal` selects polar or S0; S0 is taken from the first
/// polar channel when no S0 entries exist.
std::vector<ImagePair> collect_pairs(const SubjectCatalog& catalog,
                                     const std::vector<std::string>& subjects,
                                     Modality thermal, int image_size,
                                     const std::string& range_filter = "");

}  // namespace polarface
