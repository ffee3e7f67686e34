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

#ifndef CLOAK_RESAMPLE_HPP
#define CLOAK_RESAMPLE_HPP

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "cloak/core.hpp"

namespace cloak {

/// Four bilinear taps into a pixel grid: flat pixel indices and weights.
struct BilinearTaps {
  std::array<std::uint32_t, 4> pixel{};
  std::array<double, 4> weight{};

  double sample(const PixelGrid& grid, int channel) const noexcept {
    const auto v = grid.values();
    double acc = 0.0;
    for (int k = 0; k < 4; ++k) {
      acc += weight[k] * v[static_cast<std::size_t>(pixel[k]) * PixelGrid::kChannels + channel];
    }
    return acc;
  }
};

/// Taps for sampling at continuous coordinates (u, v), where pixel (x, y)
/// covers [x, x+1) x [y, y+1) and its center is (x+0.5, y+0.5). Samples
/// outside the grid clamp to the edge.
BilinearTaps bilinear_taps(double u, double v, int height, int width) noexcept;

/// A linear map between two pixel grids in which every output pixel is a
/// bilinear combination of input pixels (same combination on each channel).
/// The transpose carries gradients back to the input.
class ResamplePlan {
 public:
  ResamplePlan(int in_height, int in_width, int out_height, int out_width,
               std::vector<BilinearTaps> taps);

  int in_height() const noexcept { return in_height_; }
  int in_width() const noexcept { return in_width_; }
  int out_height() const noexcept { return out_height_; }
  int out_width() const noexcept { return out_width_; }
  std::span<const BilinearTaps> taps() const noexcept { return taps_; }

  PixelGrid apply(const PixelGrid& input) const;

  /// grad_in += Aᵀ grad_out. Both spans are H x W x 3 interleaved.
  void accumulate_transpose(std::span<const double> grad_out, std::span<double> grad_in) const;

 private:
  int in_height_;
  int in_width_;
  int out_height_;
  int out_width_;
  std::vector<BilinearTaps> taps_;
};

/// Bilinear resize with pixel-center alignment and no prefilter.
ResamplePlan make_resize_plan(int in_height, int in_width, int out_height, int out_width);

PixelGrid resize_bilinear(const PixelGrid& input, int out_height, int out_width);

}  // namespace cloak

#endif  // CLOAK_RESAMPLE_HPP
