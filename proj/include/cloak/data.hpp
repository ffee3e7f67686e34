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

#ifndef CLOAK_DATA_HPP
#define CLOAK_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cloak/core.hpp"
#include "cloak/detectors.hpp"
#include "cloak/source.hpp"
#include "cloak/toydet.hpp"

namespace cloak {

struct DatasetImage {
  std::int64_t id = 0;
  std::string file_name;
  int width = 0;
  int height = 0;
  std::vector<BBox> boxes;

  bool contains(int class_id) const;
  friend bool operator==(const DatasetImage&, const DatasetImage&) = default;
};

struct Category {
  int id = 0;
  std::string name;
  friend bool operator==(const Category&, const Category&) = default;
};

/// COCO-style annotated image set. Images are decoded on access.
class Dataset final : public ImageSource {
 public:
  Dataset() = default;
  Dataset(std::filesystem::path root, std::vector<DatasetImage> images,
          std::vector<Category> categories);

  std::size_t size() const override { return images_.size(); }
  /// Reads the image (PNG or JPEG). Throws MissingFileError / DataError.
  LabeledImage at(std::size_t index) const override;

  const std::filesystem::path& root() const noexcept { return root_; }
  const std::vector<DatasetImage>& images() const noexcept { return images_; }
  const std::vector<Category>& categories() const noexcept { return categories_; }

  /// Checks files, boxes and class ids; throws the matching DataError.
  void validate() const;

 private:
  std::filesystem::path root_;
  std::vector<DatasetImage> images_;
  std::vector<Category> categories_;
};

/// Reads `annotation_file` (relative to `root` unless absolute):
/// images[{id,file_name,width,height}], annotations[{image_id,bbox:[x,y,w,h],
/// category_id}], categories[{id,name}].
Dataset load_dataset(const std::filesystem::path& root, const std::filesystem::path& annotation_file);

void save_annotations(const Dataset& dataset, const std::filesystem::path& annotation_path);

/// Writes scenes [first, first + count) as PNGs plus annotations.json under
/// `root` and returns the loaded dataset.
Dataset export_scenes(const SceneSpec& spec, std::uint64_t first, std::size_t count,
                      const std::filesystem::path& root, int jobs = 1);

/// n images containing class_id: shuffle the qualifying images with a seeded
/// Rng, keep the first n (in shuffled order).
Dataset filter_and_sample(const Dataset& dataset, int class_id, std::size_t n, std::uint64_t seed);

/// Applies the adapter's resize convention to the image and its boxes.
LabeledImage resize_for(const InputConvention& convention, const LabeledImage& item,
                        ResizePhase phase = ResizePhase::kTest);
LabeledImage resize_for(const DetectorAdapter& adapter, const LabeledImage& item,
                        ResizePhase phase = ResizePhase::kTest);

/// One parsed Pascal VOC annotation.
struct VocObject {
  std::string name;
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;
};
struct VocRecord {
  std::string file_name;
  int width = 0;
  int height = 0;
  std::vector<VocObject> objects;
};

/// Maps VOC records onto the COCO schema. Objects whose name is not a
/// category name are dropped. VOC corner coordinates are 1-based.
Dataset convert_voc(const std::filesystem::path& root, std::span<const VocRecord> records,
                    const std::vector<Category>& categories);

}  // namespace cloak

#endif  // CLOAK_DATA_HPP
