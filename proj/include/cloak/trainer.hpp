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

#ifndef CLOAK_TRAINER_HPP
#define CLOAK_TRAINER_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cloak/core.hpp"
#include "cloak/detectors.hpp"
#include "cloak/objective.hpp"
#include "cloak/renderer.hpp"
#include "cloak/source.hpp"

namespace cloak {

enum class PlacementSource { kDetections, kGroundTruth };
enum class TransformScope { kPerBox, kPerImage };
enum class PatchInit { kRandom, kGrey };

struct AttackConfig {
  int patch_height = kDefaultPatchHeight;
  int patch_width = kDefaultPatchWidth;
  /// Registry ids of the detectors under attack.
  std::vector<std::string> detectors;
  /// Empty means weight 1 for every detector.
  std::vector<double> detector_weights;
  int epochs = 400;
  int batch_size = 8;
  double learning_rate = 1e-3;
  int lr_decay_every = 100;
  double lr_decay_factor = 0.1;
  double gamma = kDefaultTvWeight;
  /// Multiplies the objectness term (not the TV term).
  double obj_scale = 1.0;
  AugmentationRanges ranges;
  PlacementRule rule;
  RenderOptions render;
  TransformScope transform_scope = TransformScope::kPerBox;
  PlacementSource placement = PlacementSource::kDetections;
  /// Detections used for placement: logit >= threshold, then NMS.
  double placement_threshold = 0.0;
  double placement_nms = 0.45;
  PatchInit init = PatchInit::kRandom;
  std::uint64_t seed = 0;
  /// Write a checkpoint every N epochs (0 disables).
  int checkpoint_every = 0;
  int jobs = 1;

  void validate() const;
};

/// Loss and patch gradient of the attack objective over a fixed image set.
/// Detectors are held in id order, so results do not depend on the order
/// they were supplied in.
class PatchObjective {
 public:
  PatchObjective(const AttackConfig& cfg, std::vector<std::shared_ptr<const DetectorAdapter>> detectors,
                 const ImageSource& data);

  std::size_t size() const noexcept { return placements_.size(); }
  /// Person boxes the patch is rendered onto, per image.
  const std::vector<std::vector<BBox>>& placements() const noexcept { return placements_; }
  /// Total number of placement boxes.
  std::size_t box_count() const noexcept;

  /// Transforms for the boxes of one image in a given epoch.
  std::vector<RenderParams> transforms(std::size_t image, std::uint64_t epoch) const;

  /// Mean over `batch` of obj_scale * sum_j w_j * objectness. When `grad` is
  /// given it receives the gradient w.r.t. the patch pixels (TV excluded).
  double objectness(const Patch& patch, std::span<const std::size_t> batch, std::uint64_t epoch,
                    std::vector<double>* grad = nullptr,
                    std::map<std::string, double>* per_detector = nullptr) const;

  /// objectness + gamma * TV over the whole set.
  LossReport loss(const Patch& patch, std::uint64_t epoch) const;

 private:
  const AttackConfig& cfg_;
  std::vector<std::shared_ptr<const DetectorAdapter>> detectors_;
  std::vector<double> weights_;
  const ImageSource& data_;
  std::vector<std::vector<BBox>> placements_;
};

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  LossReport loss;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  /// (epoch, sha256 of the checkpoint PNG).
  std::vector<std::pair<int, std::string>> checkpoints;
};

/// Full optimizer state; resuming from it reproduces an uninterrupted run.
struct TrainCheckpoint {
  int next_epoch = 0;
  std::vector<double> params;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::uint64_t adam_t = 0;
  std::string config_hash;

  void save(const std::filesystem::path& path) const;
  static TrainCheckpoint load(const std::filesystem::path& path);
};

struct TrainOptions {
  std::optional<Patch> init;
  std::optional<TrainCheckpoint> resume;
  std::filesystem::path checkpoint_dir;
  /// JSON-lines epoch log.
  std::ostream* log = nullptr;
  std::function<void(const EpochRecord&)> on_epoch;
  /// Recorded in the patch metadata.
  std::string config_hash;
};

/// Optimizes a universal patch against the ensemble. Throws DivergenceError
/// on a non-finite loss and DataError when no image has a placement box.
Patch train_patch(const AttackConfig& cfg,
                  std::span<const std::shared_ptr<const DetectorAdapter>> detectors,
                  const ImageSource& data, const TrainOptions& options = {},
                  TrainHistory* history = nullptr);

/// Starting patch for a config (seeded uniform noise or flat grey).
Patch initial_patch(const AttackConfig& cfg);

Patch make_grey_patch(int height, int width, double value = 0.5);
Patch make_random_patch(int height, int width, std::uint64_t seed);
/// The patch rotated by 180 degrees.
Patch make_flipped_patch(const Patch& patch);
/// `region` of `image` resampled to height x width. Throws GeometryError
/// when the region is empty or leaves the image.
Patch make_crop_patch(const ImageBuffer& image, const BBox& region, int height, int width);

struct RgbResult {
  std::array<double, 3> rgb{0.5, 0.5, 0.5};
  double loss = 0.0;
  double grey_loss = 0.0;
  int best_epoch = 0;
  Patch patch;
};

/// Optimizes a single color shared by every patch pixel. The color with the
/// lowest held-out loss seen during training is returned (grey if nothing
/// beats it).
RgbResult optimize_rgb(const AttackConfig& cfg,
                       std::span<const std::shared_ptr<const DetectorAdapter>> detectors,
                       const ImageSource& train, const ImageSource& held_out,
                       std::ostream* log = nullptr);

}  // namespace cloak

#endif  // CLOAK_TRAINER_HPP
