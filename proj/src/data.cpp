// Copyright 2026 The Cloak Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cloak/data.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "cloak/errors.hpp"
#include "cloak/image_io.hpp"
#include "cloak/parallel.hpp"
#include "cloak/resample.hpp"
#include "cloak/rng.hpp"

namespace cloak {

bool DatasetImage::contains(int class_id) const {
  return std::any_of(boxes.begin(), boxes.end(), [&](const BBox& b) { return b.class_id == class_id; });
}

Dataset::Dataset(std::filesystem::path root, std::vector<DatasetImage> images,
                 std::vector<Category> categories)
    : root_(std::move(root)), images_(std::move(images)), categories_(std::move(categories)) {}

void Dataset::validate() const {
  std::set<int> known;
  for (const Category& c : categories_) known.insert(c.id);
  std::set<std::int64_t> ids;
  for (const DatasetImage& img : images_) {
    if (!ids.insert(img.id).second) throw DataError("duplicate image id " + std::to_string(img.id));
    if (img.width <= 0 || img.height <= 0) {
      throw DataError("image " + img.file_name + " has non-positive dimensions");
    }
    if (!std::filesystem::exists(root_ / img.file_name)) {
      throw MissingFileError("image file missing: " + (root_ / img.file_name).string());
    }
    for (const BBox& b : img.boxes) {
      if (!b.valid()) throw MalformedBoxError("degenerate box in " + img.file_name);
      if (!known.contains(b.class_id)) {
        throw UnknownClassError("unknown category id " + std::to_string(b.class_id) + " in " +
                                img.file_name);
      }
    }
  }
}

LabeledImage Dataset::at(std::size_t index) const {
  const DatasetImage& img = images_.at(index);
  LabeledImage out;
  out.image.pixels = read_image(root_ / img.file_name);
  out.image.source_id = img.file_name;
  if (out.image.height() != img.height || out.image.width() != img.width) {
    throw DataError("image " + img.file_name + " does not match its annotated size");
  }
  out.boxes = img.boxes;
  return out;
}

Dataset load_dataset(const std::filesystem::path& root, const std::filesystem::path& annotation_file) {
  const std::filesystem::path path = annotation_file.is_absolute() ? annotation_file : root / annotation_file;
  std::ifstream in(path);
  if (!in) throw MissingFileError("annotation file not found: " + path.string());
  std::vector<DatasetImage> images;
  std::vector<Category> categories;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    for (const auto& c : j.at("categories")) {
      categories.push_back({c.at("id").get<int>(), c.value("name", "")});
    }
    std::map<std::int64_t, std::size_t> by_id;
    for (const auto& im : j.at("images")) {
      DatasetImage d;
      d.id = im.at("id").get<std::int64_t>();
      d.file_name = im.at("file_name").get<std::string>();
      d.width = im.at("width").get<int>();
      d.height = im.at("height").get<int>();
      by_id[d.id] = images.size();
      images.push_back(std::move(d));
    }
    for (const auto& a : j.at("annotations")) {
      const auto image_id = a.at("image_id").get<std::int64_t>();
      const auto it = by_id.find(image_id);
      if (it == by_id.end()) {
        throw MissingFileError("annotation references absent image id " + std::to_string(image_id));
      }
      const auto bbox = a.at("bbox").get<std::vector<double>>();
      if (bbox.size() != 4) throw MalformedBoxError("bbox must have four numbers");
      BBox b{bbox[0], bbox[1], bbox[0] + bbox[2], bbox[1] + bbox[3], a.at("category_id").get<int>(),
             std::nullopt};
      if (!(bbox[2] > 0.0 && bbox[3] > 0.0)) {
        throw MalformedBoxError("non-positive box size for image id " + std::to_string(image_id));
      }
      images[it->second].boxes.push_back(b);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed annotation file " + path.string() + ": " + e.what());
  }
  Dataset d(root, std::move(images), std::move(categories));
  d.validate();
  return d;
}

void save_annotations(const Dataset& dataset, const std::filesystem::path& annotation_path) {
  nlohmann::json j;
  j["images"] = nlohmann::json::array();
  j["annotations"] = nlohmann::json::array();
  j["categories"] = nlohmann::json::array();
  std::int64_t ann_id = 1;
  for (const DatasetImage& img : dataset.images()) {
    j["images"].push_back(
        {{"id", img.id}, {"file_name", img.file_name}, {"width", img.width}, {"height", img.height}});
    for (const BBox& b : img.boxes) {
      j["annotations"].push_back({{"id", ann_id++},
                                  {"image_id", img.id},
                                  {"bbox", {b.x_min, b.y_min, b.width(), b.height()}},
                                  {"category_id", b.class_id}});
    }
  }
  for (const Category& c : dataset.categories()) j["categories"].push_back({{"id", c.id}, {"name", c.name}});
  std::ofstream out(annotation_path);
  if (!out) throw DataError("cannot write " + annotation_path.string());
  out << j.dump(1) << '\n';
}

Dataset export_scenes(const SceneSpec& spec, std::uint64_t first, std::size_t count,
                      const std::filesystem::path& root, int jobs) {
  spec.validate();
  std::filesystem::create_directories(root / "images");
  std::vector<DatasetImage> images(count);
  parallel_for(count, jobs, [&](std::size_t i) {
    const LabeledImage scene = gen_scene(spec, first + i);
    DatasetImage& d = images[i];
    d.id = static_cast<std::int64_t>(first + i);
    d.file_name = "images/" + scene.image.source_id + ".png";
    d.width = scene.image.width();
    d.height = scene.image.height();
    d.boxes = scene.boxes;
    write_png(root / d.file_name, scene.image.pixels);
  });
  Dataset d(root, std::move(images), {{kPersonClass, "person"}, {kDistractorClass, "distractor"}});
  save_annotations(d, root / "annotations.json");
  return load_dataset(root, "annotations.json");
}

Dataset filter_and_sample(const Dataset& dataset, int class_id, std::size_t n, std::uint64_t seed) {
  std::vector<DatasetImage> qualifying;
  for (const DatasetImage& img : dataset.images()) {
    if (img.contains(class_id)) qualifying.push_back(img);
  }
  if (n > qualifying.size()) {
    throw DataError("requested " + std::to_string(n) + " images with class " +
                    std::to_string(class_id) + " but only " + std::to_string(qualifying.size()) +
                    " are available");
  }
  Rng rng(seed);
  rng.shuffle(std::span<DatasetImage>(qualifying));
  qualifying.resize(n);
  return {dataset.root(), std::move(qualifying), dataset.categories()};
}

LabeledImage resize_for(const InputConvention& convention, const LabeledImage& item, ResizePhase phase) {
  const auto [th, tw] = convention.target_size(item.image.height(), item.image.width(), phase);
  LabeledImage out;
  out.image.source_id = item.image.source_id;
  out.image.pixels = resize_bilinear(item.image.pixels, th, tw);
  const double sx = static_cast<double>(tw) / item.image.width();
  const double sy = static_cast<double>(th) / item.image.height();
  out.boxes.reserve(item.boxes.size());
  for (BBox b : item.boxes) {
    b.x_min *= sx;
    b.x_max *= sx;
    b.y_min *= sy;
    b.y_max *= sy;
    out.boxes.push_back(b);
  }
  return out;
}

LabeledImage resize_for(const DetectorAdapter& adapter, const LabeledImage& item, ResizePhase phase) {
  return resize_for(adapter.input_convention(), item, phase);
}

Dataset convert_voc(const std::filesystem::path& root, std::span<const VocRecord> records,
                    const std::vector<Category>& categories) {
  std::map<std::string, int> ids;
  for (const Category& c : categories) ids[c.name] = c.id;
  std::vector<DatasetImage> images;
  std::int64_t next_id = 1;
  for (const VocRecord& r : records) {
    DatasetImage d;
    d.id = next_id++;
    d.file_name = r.file_name;
    d.width = r.width;
    d.height = r.height;
    for (const VocObject& o : r.objects) {
      const auto it = ids.find(o.name);
      if (it == ids.end()) continue;
      const BBox b{o.xmin - 1.0, o.ymin - 1.0, o.xmax, o.ymax, it->second, std::nullopt};
      if (!b.valid()) throw MalformedBoxError("degenerate VOC box in " + r.file_name);
      d.boxes.push_back(b);
    }
    images.push_back(std::move(d));
  }
  return {root, std::move(images), categories};
}

}  // namespace cloak
