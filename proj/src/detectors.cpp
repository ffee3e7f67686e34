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

#include "cloak/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cloak/errors.hpp"

namespace cloak {

InputConvention InputConvention::square(int size, int min_side) {
  InputConvention c;
  c.kind = Kind::kSquare;
  c.square_size = size;
  c.min_side = min_side;
  return c;
}

InputConvention InputConvention::shortest_side(int train, int test, int min_side) {
  InputConvention c;
  c.kind = Kind::kShortestSide;
  c.train_shortest_side = train;
  c.test_shortest_side = test;
  c.min_side = min_side;
  return c;
}

std::pair<int, int> InputConvention::target_size(int height, int width, ResizePhase phase) const {
  switch (kind) {
    case Kind::kNative:
      return {height, width};
    case Kind::kSquare:
      return {square_size, square_size};
    case Kind::kShortestSide: {
      const int target = phase == ResizePhase::kTrain ? train_shortest_side : test_shortest_side;
      const double s = static_cast<double>(target) / std::min(height, width);
      if (height <= width) {
        return {target, static_cast<int>(std::lround(width * s))};
      }
      return {static_cast<int>(std::lround(height * s)), target};
    }
  }
  return {height, width};
}

std::vector<BBox> nms(std::span<const BBox> dets, double iou_thresh) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score.value_or(0.0) > dets[b].score.value_or(0.0);
  });
  std::vector<BBox> kept;
  for (std::size_t i : order) {
    const BBox& cand = dets[i];
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const BBox& k) {
      return iou(k, cand) > iou_thresh;
    });
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

std::vector<BBox> select_detections(std::span<const BBox> candidates, double score_threshold,
                                    double nms_iou, std::size_t max_detections) {
  std::vector<BBox> passing;
  for (const BBox& b : candidates) {
    if (b.score && *b.score >= score_threshold && b.valid()) passing.push_back(b);
  }
  std::vector<BBox> kept = nms(passing, nms_iou);
  if (kept.size() > max_detections) kept.resize(max_detections);
  return kept;
}

std::vector<BBox> detect(const DetectorAdapter& adapter, const ImageBuffer& image,
                         double score_threshold, double nms_iou, std::size_t max_detections) {
  if (!(nms_iou >= 0.0 && nms_iou <= 1.0)) throw ConfigError("nms_iou must be in [0,1]");
  if (std::isnan(score_threshold)) throw ConfigError("score threshold is NaN");
  return select_detections(adapter.candidates(image), score_threshold, nms_iou, max_detections);
}

void AdapterRegistry::add(std::shared_ptr<const DetectorAdapter> adapter) {
  std::scoped_lock lock(mutex_);
  adapters_[adapter->id()] = std::move(adapter);
}

void AdapterRegistry::add_factory(const std::string& prefix, AdapterFactory factory) {
  std::scoped_lock lock(mutex_);
  factories_[prefix] = std::move(factory);
}

std::shared_ptr<const DetectorAdapter> AdapterRegistry::resolve(const std::string& id) const {
  std::scoped_lock lock(mutex_);
  if (auto it = adapters_.find(id); it != adapters_.end()) return it->second;
  const auto colon = id.find(':');
  if (colon != std::string::npos) {
    if (auto it = factories_.find(id.substr(0, colon)); it != factories_.end()) {
      auto adapter = it->second(id.substr(colon + 1));
      adapters_[id] = adapter;
      return adapter;
    }
  }
  throw ConfigError("unknown detector id '" + id + "'");
}

bool AdapterRegistry::contains(const std::string& id) const {
  std::scoped_lock lock(mutex_);
  return adapters_.contains(id);
}

AdapterRegistry& default_registry() {
  static AdapterRegistry registry;
  return registry;
}

}  // namespace cloak
