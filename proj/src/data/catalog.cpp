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

#include "polarface/data/catalog.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <tuple>

#include "json.hpp"
#include "polarface/core/error.hpp"
#include "polarface/data/png.hpp"

namespace polarface {

namespace fs = std::filesystem;
using nlohmann::json;

void SubjectCatalog::validate() const {
  std::set<std::string> paths;
  std::map<std::string, std::pair<bool, bool>> seen;  // visible, thermal
  for (const auto& e : entries) {
    if (e.subject_id.empty()) throw ConfigError("catalog entry without subject_id");
    if (!paths.insert(e.path).second) throw ConfigError("duplicate catalog path '" + e.path + "'");
    auto& s = seen[e.subject_id];
    (is_thermal(e.modality) ? s.second : s.first) = true;
  }
  for (const auto& [id, s] : seen) {
    if (!s.first || !s.second) {
      throw ConfigError("subject '" + id + "' needs both a visible and a thermal entry");
    }
  }
}

void SubjectCatalog::sort() {
  std::sort(entries.begin(), entries.end(), [](const CatalogEntry& a, const CatalogEntry& b) {
    return std::tie(a.subject_id, a.capture_id, a.modality, a.path) <
           std::tie(b.subject_id, b.capture_id, b.modality, b.path);
  });
}

std::vector<std::string> SubjectCatalog::subjects() const {
  std::set<std::string> ids;
  for (const auto& e : entries) ids.insert(e.subject_id);
  return {ids.begin(), ids.end()};
}

std::set<std::string> SubjectCatalog::subjects_in(Volume volume) const {
  std::set<std::string> ids;
  for (const auto& e : entries) {
    if (e.volume == volume) ids.insert(e.subject_id);
  }
  return ids;
}

SubjectCatalog SubjectCatalog::load_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open catalog manifest " + manifest_path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("catalog manifest " + manifest_path + " is not valid JSON: " + e.what());
  }
  SubjectCatalog catalog;
  catalog.root = fs::path(manifest_path).parent_path().string();
  const json& list = doc.is_array() ? doc : doc.at("entries");
  try {
    for (const auto& item : list) {
      CatalogEntry e;
      e.subject_id = item.at("subject_id").get<std::string>();
      e.modality = parse_modality(item.at("modality").get<std::string>());
      e.range_tag = item.value("range", std::string("1"));
      e.volume = parse_volume(item.value("volume", std::string("I")));
      e.path = item.at("path").get<std::string>();
      e.capture_id = item.value("capture", std::string());
      if (item.contains("box") && !item["box"].is_null()) {
        const auto b = item["box"].get<std::vector<double>>();
        if (b.size() != 4) throw ConfigError("box must have four coordinates");
        e.box = Box{b[0], b[1], b[2], b[3]};
      }
      catalog.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ConfigError("malformed catalog manifest: " + std::string(e.what()));
  }
  catalog.sort();
  catalog.validate();
  return catalog;
}

void SubjectCatalog::save_manifest(const std::string& manifest_path) const {
  const fs::path dir = fs::path(manifest_path).parent_path();
  if (!dir.empty()) fs::create_directories(dir);
  json list = json::array();
  for (const auto& e : entries) {
    if (e.image) {
      const fs::path file = dir / e.path;
      fs::create_directories(file.parent_path());
      write_file(file.string(), encode_image(*e.image));
    }
    json item = {{"subject_id", e.subject_id}, {"modality", to_string(e.modality)},
                 {"range", e.range_tag},       {"volume", to_string(e.volume)},
                 {"path", e.path},             {"capture", e.capture_id}};
    if (e.box) item["box"] = {e.box->x0, e.box->y0, e.box->x1, e.box->y1};
    list.push_back(std::move(item));
  }
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + manifest_path);
  out << json{{"entries", list}}.dump(2) << "\n";
}

FaceImage load_entry(const SubjectCatalog& catalog, const CatalogEntry& entry, int image_size) {
  FaceImage img;
  if (entry.image) {
    img = *entry.image;
  } else {
    const fs::path p = fs::path(entry.path).is_absolute() ? fs::path(entry.path)
                                                          : fs::path(catalog.root) / entry.path;
    img = decode_image(read_file(p.string()), entry.modality);
  }
  img.subject_id = entry.subject_id;
  img.modality = entry.modality;
  img.range_tag = entry.range_tag;
  img.source_volume = entry.volume;
  img.capture_id = entry.capture_id;
  img = entry.box ? crop_register(img, *entry.box, image_size) : resize_image(img, image_size);
  img.validate();
  return img;
}

std::vector<ImagePair> collect_pairs(const SubjectCatalog& catalog,
                                     const std::vector<std::string>& subjects, Modality thermal,
                                     int image_size, const std::string& range_filter) {
  if (thermal == Modality::kVisible) throw ConfigError("thermal modality must be polar or s0");
  const std::set<std::string> wanted(subjects.begin(), subjects.end());
  bool has_s0 = false;
  for (const auto& e : catalog.entries) has_s0 = has_s0 || e.modality == Modality::kS0;
  const Modality source = thermal == Modality::kS0 && !has_s0 ? Modality::kPolar : thermal;

  // Key: subject, range, capture (or position when capture ids are absent).
  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, const CatalogEntry*> visible, thermal_entries;
  std::map<std::pair<std::string, std::string>, int> counter_v, counter_t;
  for (const auto& e : catalog.entries) {
    if (!wanted.count(e.subject_id)) continue;
    if (!range_filter.empty() && e.range_tag != range_filter) continue;
    const bool is_v = e.modality == Modality::kVisible;
    if (!is_v && e.modality != source) continue;
    std::string capture = e.capture_id;
    if (capture.empty()) {
      auto& counter = is_v ? counter_v : counter_t;
      capture = "#" + std::to_string(counter[{e.subject_id, e.range_tag}]++);
    }
    (is_v ? visible : thermal_entries)[{e.subject_id, e.range_tag, capture}] = &e;
  }
  std::vector<ImagePair> pairs;
  for (const auto& [key, v] : visible) {
    auto it = thermal_entries.find(key);
    if (it == thermal_entries.end()) continue;
    ImagePair pair;
    pair.visible = load_entry(catalog, *v, image_size);
    FaceImage t = load_entry(catalog, *it->second, image_size);
    if (thermal == Modality::kS0 && t.modality == Modality::kPolar) {
      const std::size_t plane = static_cast<std::size_t>(t.height()) * t.width();
      Tensor<float> s0(Shape{1, t.height(), t.width()});
      std::copy(t.pixels.data(), t.pixels.data() + plane, s0.data());
      t.pixels = std::move(s0);
      t.modality = Modality::kS0;
    }
    pair.thermal = t.as_three_channel();
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace polarface
