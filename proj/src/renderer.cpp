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

#include "cloak/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "cloak/errors.hpp"
#include "cloak/rng.hpp"

namespace cloak {
namespace {

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

void check_range(const Range& r, const char* name) {
  if (!(r.lo <= r.hi) || !std::isfinite(r.lo) || !std::isfinite(r.hi)) {
    throw ConfigError(std::string("augmentation range '") + name + "' is inverted or not finite");
  }
}

}  // namespace

AugmentationRanges AugmentationRanges::identity() {
  AugmentationRanges r;
  r.brightness = {0.0, 0.0};
  r.contrast = {1.0, 1.0};
  r.rotation_deg = {0.0, 0.0};
  r.translate_frac = {0.0, 0.0};
  r.shear_deg = {0.0, 0.0};
  r.scale_jitter = {1.0, 1.0};
  r.tps_enabled = false;
  return r;
}

void AugmentationRanges::validate() const {
  check_range(brightness, "brightness");
  check_range(contrast, "contrast");
  check_range(rotation_deg, "rotation");
  check_range(translate_frac, "translate");
  check_range(shear_deg, "shear");
  check_range(scale_jitter, "scale_jitter");
  if (contrast.lo < 0.0) throw ConfigError("contrast gain must be non-negative");
  if (scale_jitter.lo <= 0.0) throw ConfigError("scale jitter must be positive");
  if (std::abs(shear_deg.lo) >= 89.0 || std::abs(shear_deg.hi) >= 89.0) {
    throw ConfigError("shear must stay within (-89, 89) degrees");
  }
  if (tps_enabled && (tps_rows < 3 || tps_cols < 3)) {
    throw ConfigError("TPS needs at least 3x3 control points");
  }
  if (tps_max_offset < 0.0) throw ConfigError("TPS offset bound must be non-negative");
}

TpsOffsets TpsOffsets::zeros(int rows, int cols) { return uniform(rows, cols, 0.0, 0.0); }

TpsOffsets TpsOffsets::uniform(int rows, int cols, double dx, double dy) {
  TpsOffsets t;
  t.rows = rows;
  t.cols = cols;
  t.offsets.assign(static_cast<std::size_t>(std::max(rows, 0) * std::max(cols, 0)), {dx, dy});
  return t;
}

bool RenderParams::is_identity() const noexcept {
  const bool tps_neutral =
      !tps || std::all_of(tps->offsets.begin(), tps->offsets.end(),
                          [](const auto& o) { return o[0] == 0.0 && o[1] == 0.0; });
  return brightness_delta == 0.0 && contrast_gain == 1.0 && rotation_deg == 0.0 &&
         translate_dx == 0.0 && translate_dy == 0.0 && shear_deg == 0.0 &&
         scale_jitter == 1.0 && tps_neutral;
}

void PlacementRule::validate() const {
  if (!(rel_width > 0.0 && rel_width <= 1.0)) throw ConfigError("rel_width must be in (0,1]");
  if (!(vertical_anchor >= 0.0 && vertical_anchor <= 1.0)) {
    throw ConfigError("vertical_anchor must be in [0,1]");
  }
}

AffineMap AffineMap::inverse() const {
  AffineMap inv;
  inv.linear = linear.inverse();
  inv.offset = -inv.linear * offset;
  return inv;
}

RenderParams sample_params(std::uint64_t rng_seed, const AugmentationRanges& ranges) {
  ranges.validate();
  Rng rng(rng_seed);
  RenderParams p;
  p.brightness_delta = rng.uniform(ranges.brightness.lo, ranges.brightness.hi);
  p.contrast_gain = rng.uniform(ranges.contrast.lo, ranges.contrast.hi);
  p.rotation_deg = rng.uniform(ranges.rotation_deg.lo, ranges.rotation_deg.hi);
  p.translate_dx = rng.uniform(ranges.translate_frac.lo, ranges.translate_frac.hi);
  p.translate_dy = rng.uniform(ranges.translate_frac.lo, ranges.translate_frac.hi);
  p.shear_deg = rng.uniform(ranges.shear_deg.lo, ranges.shear_deg.hi);
  p.scale_jitter = rng.uniform(ranges.scale_jitter.lo, ranges.scale_jitter.hi);
  if (ranges.tps_enabled) {
    TpsOffsets t = TpsOffsets::zeros(ranges.tps_rows, ranges.tps_cols);
    for (auto& o : t.offsets) {
      o[0] = rng.uniform(-ranges.tps_max_offset, ranges.tps_max_offset);
      o[1] = rng.uniform(-ranges.tps_max_offset, ranges.tps_max_offset);
    }
    p.tps = std::move(t);
  }
  p.noise_seed = rng.next();
  return p;
}

std::optional<AffineMap> placement_affine(const BBox& person, const PlacementRule& rule,
                                          int patch_height, int patch_width) {
  return augmented_placement(person, rule, patch_height, patch_width, RenderParams{});
}

std::optional<AffineMap> augmented_placement(const BBox& person, const PlacementRule& rule,
                                             int patch_height, int patch_width,
                                             const RenderParams& params) {
  rule.validate();
  if (!person.valid()) throw GeometryError("placement: invalid person box");
  const double sx = rule.rel_width * person.width() / patch_width;
  const double sy =
      rule.aspect_locked ? sx : rule.rel_width * person.height() / patch_height;
  const double jitter = params.scale_jitter;
  if (sx * jitter * patch_width < 1.0 || sy * jitter * patch_height < 1.0) return std::nullopt;

  const double rot = deg2rad(params.rotation_deg);
  Eigen::Matrix2d rotation;
  rotation << std::cos(rot), -std::sin(rot), std::sin(rot), std::cos(rot);
  Eigen::Matrix2d shear;
  shear << 1.0, std::tan(deg2rad(params.shear_deg)), 0.0, 1.0;
  const Eigen::Matrix2d scale = Eigen::Vector2d(sx * jitter, sy * jitter).asDiagonal();

  const Eigen::Vector2d patch_center(0.5 * patch_width, 0.5 * patch_height);
  const Eigen::Vector2d anchor(person.center_x() + params.translate_dx * person.width(),
                               person.y_min + rule.vertical_anchor * person.height() +
                                   params.translate_dy * person.height());
  AffineMap m;
  m.linear = rotation * shear * scale;
  m.offset = anchor - m.linear * patch_center;
  return m;
}

double ThinPlateSpline::kernel(double r2) noexcept {
  return r2 <= 0.0 ? 0.0 : r2 * std::log(r2);
}

ThinPlateSpline::ThinPlateSpline(const Eigen::MatrixX2d& controls, const Eigen::MatrixX2d& values)
    : controls_(controls) {
  const Eigen::Index n = controls.rows();
  if (n < 3 || values.rows() != n) throw ConfigError("TPS: need matching control/value rows");
  kernel_matrix_.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      kernel_matrix_(i, j) = kernel((controls.row(i) - controls.row(j)).squaredNorm());
    }
  }
  Eigen::MatrixXd system = Eigen::MatrixXd::Zero(n + 3, n + 3);
  system.topLeftCorner(n, n) = kernel_matrix_;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVector3d poly(1.0, controls(i, 0), controls(i, 1));
    system.block(i, n, 1, 3) = poly;
    system.block(n, i, 3, 1) = poly.transpose();
  }
  Eigen::MatrixX2d rhs = Eigen::MatrixX2d::Zero(n + 3, 2);
  rhs.topRows(n) = values;
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
  if (!lu.isInvertible()) throw ConfigError("TPS: control points are degenerate");
  const Eigen::MatrixX2d solution = lu.solve(rhs);
  weights_ = solution.topRows(n);
  affine_ = solution.bottomRows(3);
}

Eigen::Vector2d ThinPlateSpline::evaluate(double x, double y) const {
  Eigen::Vector2d out = affine_.row(0).transpose() + x * affine_.row(1).transpose() +
                        y * affine_.row(2).transpose();
  for (Eigen::Index k = 0; k < controls_.rows(); ++k) {
    const double dx = x - controls_(k, 0);
    const double dy = y - controls_(k, 1);
    out += kernel(dx * dx + dy * dy) * weights_.row(k).transpose();
  }
  return out;
}

double ThinPlateSpline::bending_energy() const {
  return (weights_.transpose() * kernel_matrix_ * weights_).trace();
}

ThinPlateSpline fit_tps(const TpsOffsets& offsets) {
  if (offsets.rows < 3 || offsets.cols < 3) {
    throw ConfigError("TPS needs at least 3x3 control points");
  }
  const auto n = static_cast<Eigen::Index>(offsets.rows) * offsets.cols;
  if (static_cast<Eigen::Index>(offsets.offsets.size()) != n) {
    throw ConfigError("TPS offset count does not match the control grid");
  }
  Eigen::MatrixX2d controls(n, 2);
  Eigen::MatrixX2d values(n, 2);
  for (int i = 0; i < offsets.rows; ++i) {
    for (int j = 0; j < offsets.cols; ++j) {
      const Eigen::Index k = static_cast<Eigen::Index>(i) * offsets.cols + j;
      controls(k, 0) = static_cast<double>(j) / (offsets.cols - 1);
      controls(k, 1) = static_cast<double>(i) / (offsets.rows - 1);
      values(k, 0) = offsets.offsets[static_cast<std::size_t>(k)][0];
      values(k, 1) = offsets.offsets[static_cast<std::size_t>(k)][1];
    }
  }
  return {controls, values};
}

ResamplePlan make_tps_plan(int height, int width, const TpsOffsets& offsets) {
  const ThinPlateSpline tps = fit_tps(offsets);
  std::vector<BilinearTaps> taps;
  taps.reserve(static_cast<std::size_t>(height) * static_cast<std::size_t>(width));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = x + 0.5;
      const double v = y + 0.5;
      const Eigen::Vector2d d = tps.evaluate(u / width, v / height);
      taps.push_back(bilinear_taps(u - d.x() * width, v - d.y() * height, height, width));
    }
  }
  return {height, width, height, width, std::move(taps)};
}

PixelGrid tps_warp(const PixelGrid& patch, const TpsOffsets& offsets) {
  return make_tps_plan(patch.height(), patch.width(), offsets).apply(patch);
}

ImageBuffer render(const ImageBuffer& image, const Patch& patch, std::span<const BBox> persons,
                   std::span<const RenderParams> params_per_box, const PlacementRule& rule,
                   const RenderOptions& options, RenderTrace* trace) {
  if (params_per_box.size() != persons.size()) {
    throw ConfigError("render: need exactly one RenderParams per person box");
  }
  ImageBuffer out = image;
  if (trace != nullptr) {
    *trace = RenderTrace{};
    trace->patch_height = patch.height();
    trace->patch_width = patch.width();
    trace->boxes.resize(persons.size());
  }
  if (persons.empty()) return out;

  std::vector<std::size_t> order(persons.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return persons[a].area() > persons[b].area();
  });

  const int img_h = image.height();
  const int img_w = image.width();
  const int ph = patch.height();
  const int pw = patch.width();
  auto dst = out.pixels.values();

  // Per output pixel: most recent trace entry, and a back link for blending.
  std::vector<std::int64_t> head;
  std::vector<std::int64_t> prev;
  if (trace != nullptr) head.assign(out.pixels.pixel_count(), -1);

  for (std::size_t b : order) {
    const RenderParams& params = params_per_box[b];
    const auto forward = augmented_placement(persons[b], rule, ph, pw, params);
    if (!forward) continue;
    const AffineMap inverse = forward->inverse();

    const PixelGrid* source = &patch.pixels;
    PixelGrid warped;
    if (params.tps) {
      ResamplePlan plan = make_tps_plan(ph, pw, *params.tps);
      warped = plan.apply(patch.pixels);
      source = &warped;
      if (trace != nullptr) trace->boxes[b].warp = std::move(plan);
    }

    double x_lo = img_w, x_hi = 0.0, y_lo = img_h, y_hi = 0.0;
    for (const auto& corner : {Eigen::Vector2d(0, 0), Eigen::Vector2d(pw, 0),
                               Eigen::Vector2d(0, ph), Eigen::Vector2d(pw, ph)}) {
      const Eigen::Vector2d q = forward->apply(corner);
      x_lo = std::min(x_lo, q.x());
      x_hi = std::max(x_hi, q.x());
      y_lo = std::min(y_lo, q.y());
      y_hi = std::max(y_hi, q.y());
    }
    const int x0 = std::max(0, static_cast<int>(std::floor(x_lo)));
    const int x1 = std::min(img_w - 1, static_cast<int>(std::ceil(x_hi)));
    const int y0 = std::max(0, static_cast<int>(std::floor(y_lo)));
    const int y1 = std::min(img_h - 1, static_cast<int>(std::ceil(y_hi)));
    const double local_scale = std::sqrt(std::abs(forward->linear.determinant()));

    Rng noise(params.noise_seed);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Eigen::Vector2d p = inverse.apply(Eigen::Vector2d(x + 0.5, y + 0.5));
        const double u = p.x();
        const double v = p.y();
        if (!(u >= 0.0 && u < pw && v >= 0.0 && v < ph)) continue;

        double alpha = 1.0;
        if (options.edge_blend) {
          const double edge = std::min({u, pw - u, v, ph - v}) * local_scale;
          alpha = std::clamp(edge + 0.5, 0.0, 1.0);
        }
        const BilinearTaps taps = bilinear_taps(u, v, ph, pw);
        const std::size_t pix = static_cast<std::size_t>(y) * img_w + x;
        RenderTrace::Entry entry;
        entry.out_pixel = static_cast<std::uint32_t>(pix);
        entry.box = static_cast<int>(b);
        entry.taps = taps;
        for (int c = 0; c < 3; ++c) {
          double value = taps.sample(*source, c);
          if (options.noise_amplitude > 0.0) {
            value += noise.uniform(-options.noise_amplitude, options.noise_amplitude);
          }
          const double shaded = params.contrast_gain * value + params.brightness_delta;
          double gain = params.contrast_gain;
          double clamped = shaded;
          if (shaded < 0.0) {
            clamped = 0.0;
            gain = 0.0;
          } else if (shaded > 1.0) {
            clamped = 1.0;
            gain = 0.0;
          }
          double& o = dst[pix * 3 + static_cast<std::size_t>(c)];
          o = alpha == 1.0 ? clamped : alpha * clamped + (1.0 - alpha) * o;
          entry.gain[static_cast<std::size_t>(c)] = alpha * gain;
        }
        if (trace != nullptr) {
          for (std::int64_t e = head[pix]; e >= 0; e = prev[static_cast<std::size_t>(e)]) {
            for (double& g : trace->entries[static_cast<std::size_t>(e)].gain) g *= (1.0 - alpha);
          }
          prev.push_back(head[pix]);
          head[pix] = static_cast<std::int64_t>(trace->entries.size());
          trace->entries.push_back(entry);
        }
      }
    }
  }

  if (trace != nullptr) {
    std::erase_if(trace->entries, [](const RenderTrace::Entry& e) {
      return e.gain[0] == 0.0 && e.gain[1] == 0.0 && e.gain[2] == 0.0;
    });
  }
  return out;
}

void render_backward(const RenderTrace& trace, std::span<const double> grad_image,
                     std::span<double> grad_patch) {
  const std::size_t patch_values =
      static_cast<std::size_t>(trace.patch_height) * trace.patch_width * 3;
  if (grad_patch.size() != patch_values) {
    throw ConfigError("render_backward: gradient buffer does not match patch size");
  }
  // Gradients for warped boxes are gathered per box, then pulled through the warp.
  std::vector<std::vector<double>> warped_grad(trace.boxes.size());
  for (std::size_t b = 0; b < trace.boxes.size(); ++b) {
    if (trace.boxes[b].warp) warped_grad[b].assign(patch_values, 0.0);
  }
  for (const auto& e : trace.entries) {
    std::span<double> target =
        warped_grad[static_cast<std::size_t>(e.box)].empty()
            ? grad_patch
            : std::span<double>(warped_grad[static_cast<std::size_t>(e.box)]);
    for (int c = 0; c < 3; ++c) {
      const double g = grad_image[static_cast<std::size_t>(e.out_pixel) * 3 + c] *
                       e.gain[static_cast<std::size_t>(c)];
      if (g == 0.0) continue;
      for (int k = 0; k < 4; ++k) {
        target[static_cast<std::size_t>(e.taps.pixel[static_cast<std::size_t>(k)]) * 3 + c] +=
            g * e.taps.weight[static_cast<std::size_t>(k)];
      }
    }
  }
  for (std::size_t b = 0; b < trace.boxes.size(); ++b) {
    if (trace.boxes[b].warp) trace.boxes[b].warp->accumulate_transpose(warped_grad[b], grad_patch);
  }
}

}  // namespace cloak
