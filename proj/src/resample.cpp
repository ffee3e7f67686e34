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

#include "cloak/resample.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "cloak/errors.hpp"

namespace cloak {

BilinearTaps bilinear_taps(double u, double v, int height, int width) noexcept {
  const double xf = u - 0.5;
  const double yf = v - 0.5;
  const double x0f = std::floor(xf);
  const double y0f = std::floor(yf);
  const double fx = xf - x0f;
  const double fy = yf - y0f;
  const auto clampi = [](double i, int n) {
    return static_cast<std::uint32_t>(std::clamp(static_cast<long long>(i), 0LL,
                                                 static_cast<long long>(n - 1)));
  };
  const std::uint32_t x0 = clampi(x0f, width);
  const std::uint32_t x1 = clampi(x0f + 1.0, width);
  const std::uint32_t y0 = clampi(y0f, height);
  const std::uint32_t y1 = clampi(y0f + 1.0, height);
  const auto w = static_cast<std::uint32_t>(width);
  BilinearTaps t;
  t.pixel = {y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1};
  t.weight = {(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy};
  return t;
}

ResamplePlan::ResamplePlan(int in_height, int in_width, int out_height, int out_width,
                           std::vector<BilinearTaps> taps)
    : in_height_(in_height),
      in_width_(in_width),
      out_height_(out_height),
      out_width_(out_width),
      taps_(std::move(taps)) {
  if (taps_.size() != static_cast<std::size_t>(out_height) * static_cast<std::size_t>(out_width)) {
    throw ConfigError("resample plan: tap count does not match output size");
  }
}

PixelGrid ResamplePlan::apply(const PixelGrid& input) const {
  PixelGrid out(out_height_, out_width_);
  auto dst = out.values();
  for (std::size_t p = 0; p < taps_.size(); ++p) {
    for (int c = 0; c < PixelGrid::kChannels; ++c) {
      dst[p * PixelGrid::kChannels + c] = taps_[p].sample(input, c);
    }
  }
  return out;
}

void ResamplePlan::accumulate_transpose(std::span<const double> grad_out,
                                        std::span<double> grad_in) const {
  for (std::size_t p = 0; p < taps_.size(); ++p) {
    const BilinearTaps& t = taps_[p];
    for (int c = 0; c < PixelGrid::kChannels; ++c) {
      const double g = grad_out[p * PixelGrid::kChannels + c];
      if (g == 0.0) continue;
      for (int k = 0; k < 4; ++k) {
        grad_in[static_cast<std::size_t>(t.pixel[k]) * PixelGrid::kChannels + c] += g * t.weight[k];
      }
    }
  }
}

ResamplePlan make_resize_plan(int in_height, int in_width, int out_height, int out_width) {
  if (in_height <= 0 || in_width <= 0 || out_height <= 0 || out_width <= 0) {
    throw ConfigError("resize: dimensions must be positive");
  }
  std::vector<BilinearTaps> taps;
  taps.reserve(static_cast<std::size_t>(out_height) * static_cast<std::size_t>(out_width));
  const double sx = static_cast<double>(in_width) / out_width;
  const double sy = static_cast<double>(in_height) / out_height;
  for (int y = 0; y < out_height; ++y) {
    for (int x = 0; x < out_width; ++x) {
      taps.push_back(bilinear_taps((x + 0.5) * sx, (y + 0.5) * sy, in_height, in_width));
    }
  }
  return {in_height, in_width, out_height, out_width, std::move(taps)};
}

PixelGrid resize_bilinear(const PixelGrid& input, int out_height, int out_width) {
  if (input.height() == out_height && input.width() == out_width) return input;
  return make_resize_plan(input.height(), input.width(), out_height, out_width).apply(input);
}

}  // namespace cloak
