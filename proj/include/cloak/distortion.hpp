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

#ifndef CLOAK_DISTORTION_HPP
#define CLOAK_DISTORTION_HPP

#include <array>
#include <span>
#include <string>
#include <vector>

#include "cloak/core.hpp"
#include "cloak/detectors.hpp"
#include "cloak/metrics.hpp"
#include "cloak/source.hpp"

namespace cloak {

enum class DistortionKind { kPixelate, kJpeg, kGaussianBlur, kColorShift, kQuantize8 };

struct DistortionStage {
  DistortionKind kind = DistortionKind::kQuantize8;
  /// Block size (pixelate), quality (jpeg) or sigma in pixels (blur).
  double value = 0.0;
  /// Per-channel gain and offset (color shift).
  std::array<double, 3> gain{1.0, 1.0, 1.0};
  std::array<double, 3> offset{0.0, 0.0, 0.0};

  static DistortionStage pixelate(int block);
  static DistortionStage jpeg(int quality);
  static DistortionStage blur(double sigma);
  static DistortionStage color(std::array<double, 3> gain, std::array<double, 3> offset = {});
  static DistortionStage quantize();

  friend bool operator==(const DistortionStage&, const DistortionStage&) = default;
};

/// Ordered composition of stages. No stages is the identity.
///
/// Text form: comma-separated stages, e.g. "pixelate:4,jpeg:20,blur:1.5,
/// color:1.1/1/0.9@0.02/0/0,quantize". "identity" or "" is the empty list.
struct DistortionSpec {
  std::vector<DistortionStage> stages;

  static DistortionSpec parse(const std::string& text);
  std::string to_string() const;
  bool is_identity() const noexcept { return stages.empty(); }
  /// Throws ConfigError on an out-of-range parameter.
  void validate() const;

  friend bool operator==(const DistortionSpec&, const DistortionSpec&) = default;
};

PixelGrid pixelate(const PixelGrid& grid, int block);
PixelGrid gaussian_blur(const PixelGrid& grid, double sigma);

/// Runs every stage in order and clamps to [0,1].
PixelGrid apply(const DistortionSpec& spec, const PixelGrid& grid);
ImageBuffer apply(const DistortionSpec& spec, const ImageBuffer& image);

/// pixelate {2,4}, jpeg {90,50,20}, blur {1,2}, preceded by the identity.
std::vector<DistortionSpec> default_ladder();

struct DegradationRow {
  DistortionSpec spec;
  double ap = 0.0;
  double patched_ap = 0.0;
  OutcomeCounts outcomes;
};

struct DegradationReport {
  std::vector<DegradationRow> rows;
  std::string to_csv() const;
};

/// Evaluates the patched dataset once per rung, distorting each patched
/// image before detection. An identity rung is inserted first when the
/// ladder lacks one; it is exactly a plain evaluation.
DegradationReport degradation_report(const Patch& patch, const DetectorAdapter& adapter,
                                     const ImageSource& data,
                                     std::span<const DistortionSpec> ladder,
                                     const EvalOptions& base = {});

}  // namespace cloak

#endif  // CLOAK_DISTORTION_HPP
