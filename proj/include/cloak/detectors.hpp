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

#ifndef CLOAK_DETECTORS_HPP
#define CLOAK_DETECTORS_HPP

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cloak/core.hpp"

namespace cloak {

inline constexpr int kPersonClass = 1;

enum class ScoreSemantics { kObjectness, kPersonClass };

enum class ResizePhase { kTrain, kTest };

/// How an adapter resizes its input before inference.
struct InputConvention {
  enum class Kind { kNative, kSquare, kShortestSide };
  Kind kind = Kind::kNative;
  /// Square side for kSquare.
  int square_size = 0;
  /// Shortest-side targets for kShortestSide.
  int train_shortest_side = 0;
  int test_shortest_side = 0;
  /// Smallest accepted input side, checked before resizing.
  int min_side = 1;

  static InputConvention square(int size, int min_side = 1);
  static InputConvention shortest_side(int train, int test, int min_side = 1);

  /// Target (height, width) for an input of the given size.
  std::pair<int, int> target_size(int height, int width, ResizePhase phase) const;
};

/// One logit per prior plus the prior's geometry in input-image coordinates.
/// Positive logits mean "object/person present".
struct ScoreMap {
  std::vector<double> scores;
  std::vector<BBox> priors;
  std::string detector_id;
};

/// Maps a score map to dL/dscores (same length as scores).
using ScoreGradFn = std::function<std::vector<double>(const ScoreMap&)>;

/// Contract between the attack and a detector. Implementations are
/// read-only after construction.
class DetectorAdapter {
 public:
  virtual ~DetectorAdapter() = default;

  virtual const std::string& id() const = 0;
  virtual ScoreSemantics score_semantics() const = 0;
  virtual InputConvention input_convention() const = 0;
  virtual std::size_t prior_count(int height, int width) const = 0;

  virtual ScoreMap score_map(const ImageBuffer& image) const = 0;

  /// Forward and backward in one pass. `image_grad` receives dL/dimage
  /// (H x W x 3, same layout as the image pixels).
  virtual ScoreMap score_map_vjp(const ImageBuffer& image, const ScoreGradFn& loss_grad,
                                 std::vector<double>& image_grad) const = 0;

  /// Decoded candidate box for every prior, score = prior logit, class id =
  /// person. Image coordinates.
  virtual std::vector<BBox> candidates(const ImageBuffer& image) const = 0;

  /// Operating threshold tuned on a calibration split, if any.
  virtual std::optional<double> calibrated_threshold() const { return std::nullopt; }
};

/// Greedy NMS. Order: score descending, ties by smaller input index. A box
/// is dropped when its IoU with an already kept box exceeds `iou_thresh`.
std::vector<BBox> nms(std::span<const BBox> dets, double iou_thresh);

/// Threshold (score >= threshold), NMS, then keep at most `max_detections`.
std::vector<BBox> detect(const DetectorAdapter& adapter, const ImageBuffer& image,
                         double score_threshold, double nms_iou,
                         std::size_t max_detections = 100);

/// Same filtering applied to an already computed candidate list.
std::vector<BBox> select_detections(std::span<const BBox> candidates, double score_threshold,
                                    double nms_iou, std::size_t max_detections = 100);

using AdapterFactory = std::function<std::shared_ptr<const DetectorAdapter>(const std::string&)>;

/// Adapters keyed by string id. A factory registered under a prefix
/// resolves every id of the form "<prefix>:<rest>"; exact ids win.
class AdapterRegistry {
 public:
  void add(std::shared_ptr<const DetectorAdapter> adapter);
  void add_factory(const std::string& prefix, AdapterFactory factory);
  std::shared_ptr<const DetectorAdapter> resolve(const std::string& id) const;
  bool contains(const std::string& id) const;

 private:
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::shared_ptr<const DetectorAdapter>> adapters_;
  std::map<std::string, AdapterFactory> factories_;
};

AdapterRegistry& default_registry();

}  // namespace cloak

#endif  // CLOAK_DETECTORS_HPP
