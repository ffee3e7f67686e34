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

#ifndef CLOAK_RENDERER_HPP
#define CLOAK_RENDERER_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cloak/core.hpp"
#include "cloak/resample.hpp"

namespace cloak {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Sampling ranges for the random render transform. Defaults are moderate
/// lighting / viewpoint perturbations.
struct AugmentationRanges {
  Range brightness{-0.15, 0.15};
  Range contrast{0.85, 1.15};
  Range rotation_deg{-15.0, 15.0};
  Range translate_frac{-0.05, 0.05};
  Range shear_deg{-5.0, 5.0};
  Range scale_jitter{0.9, 1.1};
  bool tps_enabled = false;
  int tps_rows = 3;
  int tps_cols = 3;
  /// Control-point displacement bound, as a fraction of patch size.
  double tps_max_offset = 0.05;

  /// Every range collapsed onto the identity transform.
  static AugmentationRanges identity();
  /// Throws ConfigError on an inverted range or bad TPS grid.
  void validate() const;
};

/// Control-point displacement grid for the thin-plate-spline warp. Offsets
/// are fractions of patch width/height, row-major over the control grid.
struct TpsOffsets {
  int rows = 3;
  int cols = 3;
  std::vector<std::array<double, 2>> offsets;

  static TpsOffsets zeros(int rows, int cols);
  static TpsOffsets uniform(int rows, int cols, double dx, double dy);
};

/// One sampled transform vector.
struct RenderParams {
  double brightness_delta = 0.0;
  double contrast_gain = 1.0;
  double rotation_deg = 0.0;
  double translate_dx = 0.0;
  double translate_dy = 0.0;
  double shear_deg = 0.0;
  double scale_jitter = 1.0;
  std::optional<TpsOffsets> tps;
  std::uint64_t noise_seed = 0;

  /// True when every geometric and photometric field is neutral.
  bool is_identity() const noexcept;
};

/// Where the patch sits inside a person box.
struct PlacementRule {
  double rel_width = 0.6;
  double vertical_anchor = 0.45;
  bool aspect_locked = true;

  void validate() const;
};

struct RenderOptions {
  /// Soften the footprint border over ~1 output pixel instead of a hard edge.
  bool edge_blend = false;
  /// Amplitude of uniform pixel noise added to the sampled patch (seeded by
  /// RenderParams::noise_seed). Zero disables.
  double noise_amplitude = 0.0;
};

/// image = M * patch + t, both in continuous pixel coordinates.
struct AffineMap {
  Eigen::Matrix2d linear = Eigen::Matrix2d::Identity();
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();

  Eigen::Vector2d apply(const Eigen::Vector2d& p) const { return linear * p + offset; }
  AffineMap inverse() const;
};

RenderParams sample_params(std::uint64_t rng_seed, const AugmentationRanges& ranges);

/// Base placement of a patch_height x patch_width patch into `person`.
/// Returns nullopt when the scaled patch would cover less than one pixel in
/// either dimension (the box is skipped).
std::optional<AffineMap> placement_affine(const BBox& person, const PlacementRule& rule,
                                          int patch_height, int patch_width);

/// Placement composed with the geometric part of `params` (scale jitter,
/// shear, rotation about the patch center, then translation).
std::optional<AffineMap> augmented_placement(const BBox& person, const PlacementRule& rule,
                                             int patch_height, int patch_width,
                                             const RenderParams& params);

/// Thin-plate spline R^2 -> R^2 interpolating displacements at control points.
class ThinPlateSpline {
 public:
  /// `controls` and `values` are n x 2. Requires n >= 3 non-collinear points.
  ThinPlateSpline(const Eigen::MatrixX2d& controls, const Eigen::MatrixX2d& values);

  Eigen::Vector2d evaluate(double x, double y) const;
  /// Sum over both output dimensions of wᵀ K w (proportional to the
  /// integrated squared second derivatives).
  double bending_energy() const;

  const Eigen::MatrixX2d& radial_weights() const noexcept { return weights_; }
  const Eigen::Matrix<double, 3, 2>& affine() const noexcept { return affine_; }

  static double kernel(double r2) noexcept;

 private:
  Eigen::MatrixX2d controls_;
  Eigen::MatrixX2d weights_;
  Eigen::Matrix<double, 3, 2> affine_;
  Eigen::MatrixXd kernel_matrix_;
};

/// Spline fitted to the offsets on a regular control grid over the unit
/// square. Throws ConfigError for fewer than 3x3 control points.
ThinPlateSpline fit_tps(const TpsOffsets& offsets);

/// Linear plan for the warp out(q) = patch(q - f(q)).
ResamplePlan make_tps_plan(int height, int width, const TpsOffsets& offsets);

PixelGrid tps_warp(const PixelGrid& patch, const TpsOffsets& offsets);

/// Record of how each written output pixel depends on the patch, for the
/// backward pass.
struct RenderTrace {
  struct Entry {
    std::uint32_t out_pixel = 0;
    int box = 0;
    BilinearTaps taps;
    /// d out / d sampled value, per channel (alpha * contrast, or 0 when clamped).
    std::array<double, 3> gain{};
  };
  struct BoxSource {
    std::optional<ResamplePlan> warp;
  };

  int patch_height = 0;
  int patch_width = 0;
  std::vector<BoxSource> boxes;
  std::vector<Entry> entries;
};

/// Composites a transformed copy of the patch over every person box. Boxes
/// are drawn in descending area order so later footprints overwrite earlier
/// ones. Pixels outside every footprint are copied bit-for-bit.
ImageBuffer render(const ImageBuffer& image, const Patch& patch, std::span<const BBox> persons,
                   std::span<const RenderParams> params_per_box, const PlacementRule& rule,
                   const RenderOptions& options = {}, RenderTrace* trace = nullptr);

/// grad_patch += d(render)/d(patch)ᵀ grad_image.
void render_backward(const RenderTrace& trace, std::span<const double> grad_image,
                     std::span<double> grad_patch);

}  // namespace cloak

#endif  // CLOAK_RENDERER_HPP
