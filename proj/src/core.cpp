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

#include "cloak/core.hpp"

#include <algorithm>
#include <cmath>

#include "cloak/errors.hpp"
#include "cloak/source.hpp"

namespace cloak {

PixelGrid::PixelGrid(int height, int width, double fill) : height_(height), width_(width) {
  if (height <= 0 || width <= 0) {
    throw GeometryError("pixel grid dimensions must be positive");
  }
  values_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * kChannels,
                 fill);
}

bool BBox::valid() const noexcept {
  return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
         std::isfinite(y_max) && x_min < x_max && y_min < y_max;
}

CenterBox to_center(const BBox& box) noexcept {
  return {box.center_x(), box.center_y(), box.width(), box.height()};
}

BBox from_center(const CenterBox& box, int class_id, std::optional<double> score) noexcept {
  return {box.cx - 0.5 * box.w, box.cy - 0.5 * box.h, box.cx + 0.5 * box.w,
          box.cy + 0.5 * box.h, class_id, score};
}

double intersection_area(const BBox& a, const BBox& b) noexcept {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double iou(const BBox& a, const BBox& b) {
  if (!a.valid() || !b.valid()) throw GeometryError("iou: degenerate box");
  const double inter = intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

double coverage_fraction(const BBox& det, const BBox& gt) {
  if (!gt.valid()) throw GeometryError("coverage_fraction: ground-truth box has zero area");
  return std::clamp(intersection_area(det, gt) / gt.area(), 0.0, 1.0);
}

void clamp_in_place(PixelGrid& grid) noexcept {
  for (double& v : grid.values()) v = std::clamp(v, 0.0, 1.0);
}

Patch clamp_patch(Patch patch) {
  clamp_in_place(patch.pixels);
  return patch;
}

bool in_unit_range(const PixelGrid& grid) noexcept {
  return std::all_of(grid.values().begin(), grid.values().end(),
                     [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; });
}

std::vector<LabeledImage> collect(const ImageSource& source) {
  std::vector<LabeledImage> out;
  out.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) out.push_back(source.at(i));
  return out;
}

}  // namespace cloak
