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

#ifndef CLOAK_METRICS_HPP
#define CLOAK_METRICS_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cloak/core.hpp"
#include "cloak/detectors.hpp"
#include "cloak/renderer.hpp"
#include "cloak/source.hpp"

namespace cloak {

/// Detections and ground truth for one image. `patched_gt_ids` index into
/// `gts` and name the persons that carry the patch.
struct EvalRecord {
  std::string image_id;
  std::vector<BBox> detections;
  std::vector<BBox> gts;
  std::vector<std::size_t> patched_gt_ids;
};

enum class Outcome { kSuccess, kPartial, kFailure };

const char* to_string(Outcome outcome) noexcept;

/// All-points interpolated AP for one class. Detections are ranked by
/// score (ties keep record order) and greedily matched to the best unmatched
/// ground truth with IoU >= iou_thresh. In patched_only mode only patched
/// ground truth counts, and detections that do not intersect any patched
/// box are dropped first. Throws UndefinedMetricError with no positives.
double average_precision(std::span<const EvalRecord> records, int class_id,
                         double iou_thresh = 0.5, bool patched_only = false);

/// SUCCESS: no detection intersects the person. PARTIAL: every intersecting
/// detection covers < 50% of the person. FAILURE otherwise.
Outcome classify_outcome(std::span<const BBox> dets, const BBox& person);

struct ThresholdChoice {
  double threshold = 0.0;
  double f1 = 0.0;
};

/// Detection-score threshold maximizing F1 at IoU 0.5 (ties: higher
/// threshold). Throws CalibrationError when there are no detections.
ThresholdChoice tune_threshold(std::span<const EvalRecord> records, int class_id,
                               double iou_thresh = 0.5);

struct OutcomeCounts {
  std::size_t success = 0;
  std::size_t partial = 0;
  std::size_t failure = 0;

  std::size_t total() const noexcept { return success + partial + failure; }
  double success_rate() const noexcept;
  double partial_rate() const noexcept;
  double failure_rate() const noexcept;
};

/// Classifies every patched person using detections with score >= threshold.
OutcomeCounts tally_outcomes(std::span<const EvalRecord> records, double threshold,
                             int class_id = kPersonClass);

struct EvalOptions {
  /// No patch means the CLEAN configuration.
  std::optional<Patch> patch;
  PlacementRule rule;
  RenderOptions render;
  /// Test-time render transform; identity by default.
  AugmentationRanges ranges = AugmentationRanges::identity();
  std::uint64_t seed = 0;
  /// Outcome threshold (logit). Falls back to the adapter's calibrated
  /// threshold; CalibrationError when neither exists.
  std::optional<double> threshold;
  /// Candidates below this logit are ignored for AP.
  double candidate_floor = -8.0;
  double nms_iou = 0.45;
  std::size_t max_detections = 100;
  int class_id = kPersonClass;
  int jobs = 1;
  /// Applied to every (patched) image before detection, e.g. a distortion.
  std::function<ImageBuffer(const ImageBuffer&, std::size_t)> post_process;
};

struct EvalResult {
  double ap = 0.0;
  double patched_ap = 0.0;
  double threshold = 0.0;
  OutcomeCounts outcomes;
  std::vector<EvalRecord> records;
};

/// Renders the patch (if any) over every ground-truth person, runs the
/// detector and aggregates AP and outcome rates.
EvalResult evaluate(const DetectorAdapter& adapter, const ImageSource& data,
                    const EvalOptions& options);

struct NamedPatch {
  std::string name;
  Patch patch;
};

/// Patch x detector table of patched-person AP. The CLEAN row (no patch)
/// comes last, mirroring the usual layout.
struct TransferMatrix {
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> ap;

  std::string to_csv() const;
  double at(const std::string& row, const std::string& column) const;
};

TransferMatrix transfer_matrix(std::span<const NamedPatch> patches,
                               std::span<const std::shared_ptr<const DetectorAdapter>> adapters,
                               const ImageSource& data, const EvalOptions& base,
                               bool include_clean = true);

}  // namespace cloak

#endif  // CLOAK_METRICS_HPP
