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

#ifndef CLOAK_CORE_HPP
#define CLOAK_CORE_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cloak {

/// Dense H x W x 3 grid of reals, row-major with interleaved channels.
class PixelGrid {
 public:
  static constexpr int kChannels = 3;

  PixelGrid() = default;
  PixelGrid(int height, int width, double fill = 0.0);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * kChannels + static_cast<std::size_t>(c);
  }
  double& at(int y, int x, int c) noexcept { return values_[index(y, x, c)]; }
  double at(int y, int x, int c) const noexcept { return values_[index(y, x, c)]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  bool same_shape(const PixelGrid& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }
  friend bool operator==(const PixelGrid&, const PixelGrid&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
};

struct ImageBuffer {
  PixelGrid pixels;
  std::string source_id;

  int height() const noexcept { return pixels.height(); }
  int width() const noexcept { return pixels.width(); }
};

struct PatchMeta {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string created_at;
};

/// The attack artifact. Pixels stay within [0,1] after every update.
struct Patch {
  PixelGrid pixels;
  PatchMeta meta;

  Patch() = default;
  Patch(int height, int width, double fill = 0.0) : pixels(height, width, fill) {}

  int height() const noexcept { return pixels.height(); }
  int width() const noexcept { return pixels.width(); }
};

inline constexpr int kDefaultPatchHeight = 250;
inline constexpr int kDefaultPatchWidth = 150;

/// Axis-aligned corner-form box in continuous pixel coordinates. Ground
/// truth carries no score.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;
  int class_id = 0;
  std::optional<double> score;

  double width() const noexcept { return x_max - x_min; }
  double height() const noexcept { return y_max - y_min; }
  double area() const noexcept { return width() * height(); }
  double center_x() const noexcept { return 0.5 * (x_min + x_max); }
  double center_y() const noexcept { return 0.5 * (y_min + y_max); }
  bool valid() const noexcept;

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// An image with its annotated boxes (class ids as in the dataset).
struct LabeledImage {
  ImageBuffer image;
  std::vector<BBox> boxes;
};

struct CenterBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

CenterBox to_center(const BBox& box) noexcept;
BBox from_center(const CenterBox& box, int class_id = 0,
                 std::optional<double> score = std::nullopt) noexcept;

/// Area of intersection of two boxes (0 when disjoint).
double intersection_area(const BBox& a, const BBox& b) noexcept;

/// Intersection over union. Throws GeometryError on a zero-area box.
double iou(const BBox& a, const BBox& b);

/// Fraction of `gt` covered by `det`: area(det ∩ gt) / area(gt).
double coverage_fraction(const BBox& det, const BBox& gt);

Patch clamp_patch(Patch patch);
void clamp_in_place(PixelGrid& grid) noexcept;

/// True iff every value is finite and within [0,1].
bool in_unit_range(const PixelGrid& grid) noexcept;

}  // namespace cloak

#endif  // CLOAK_CORE_HPP
