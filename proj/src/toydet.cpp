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

#include "cloak/toydet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>

#include <json.hpp>

#include "cloak/distortion.hpp"
#include "cloak/errors.hpp"
#include "cloak/metrics.hpp"
#include "cloak/optim.hpp"
#include "cloak/parallel.hpp"
#include "cloak/resample.hpp"
#include "cloak/rng.hpp"

namespace cloak {
namespace {

using Color = std::array<double, 3>;

Color hsv(double h, double s, double v) {
  h = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(std::floor(h)) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

void put(PixelGrid& g, int x, int y, const Color& c) {
  for (int k = 0; k < 3; ++k) g.at(y, x, k) = c[static_cast<std::size_t>(k)];
}

template <typename Inside>
void fill_region(PixelGrid& g, double x0, double y0, double x1, double y1, const Color& c,
                 Inside&& inside) {
  const int xa = std::max(0, static_cast<int>(std::floor(x0)));
  const int xb = std::min(g.width() - 1, static_cast<int>(std::ceil(x1)));
  const int ya = std::max(0, static_cast<int>(std::floor(y0)));
  const int yb = std::min(g.height() - 1, static_cast<int>(std::ceil(y1)));
  for (int y = ya; y <= yb; ++y) {
    for (int x = xa; x <= xb; ++x) {
      if (inside(x + 0.5, y + 0.5)) put(g, x, y, c);
    }
  }
}

void fill_disc(PixelGrid& g, double cx, double cy, double r, const Color& c) {
  fill_region(g, cx - r, cy - r, cx + r, cy + r, c, [&](double x, double y) {
    return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
  });
}

void fill_rect(PixelGrid& g, double x0, double y0, double x1, double y1, const Color& c) {
  fill_region(g, x0, y0, x1, y1, c,
              [&](double x, double y) { return x >= x0 && x < x1 && y >= y0 && y < y1; });
}

void fill_capsule(PixelGrid& g, double ax, double ay, double bx, double by, double r,
                  const Color& c) {
  const double dx = bx - ax;
  const double dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  fill_region(g, std::min(ax, bx) - r, std::min(ay, by) - r, std::max(ax, bx) + r,
              std::max(ay, by) + r, c, [&](double x, double y) {
                double t = len2 > 0.0 ? ((x - ax) * dx + (y - ay) * dy) / len2 : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                const double px = ax + t * dx - x;
                const double py = ay + t * dy - y;
                return px * px + py * py <= r * r;
              });
}

void fill_triangle(PixelGrid& g, const std::array<std::array<double, 2>, 3>& p, const Color& c) {
  const auto edge = [](const std::array<double, 2>& a, const std::array<double, 2>& b, double x,
                       double y) { return (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]); };
  const double x0 = std::min({p[0][0], p[1][0], p[2][0]});
  const double x1 = std::max({p[0][0], p[1][0], p[2][0]});
  const double y0 = std::min({p[0][1], p[1][1], p[2][1]});
  const double y1 = std::max({p[0][1], p[1][1], p[2][1]});
  fill_region(g, x0, y0, x1, y1, c, [&](double x, double y) {
    const double e0 = edge(p[0], p[1], x, y);
    const double e1 = edge(p[1], p[2], x, y);
    const double e2 = edge(p[2], p[0], x, y);
    return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
  });
}

void paint_background(PixelGrid& g, Rng& rng) {
  const Color a = hsv(rng.uniform(), rng.uniform(0.0, 0.5), rng.uniform(0.3, 0.9));
  const Color b = hsv(rng.uniform(), rng.uniform(0.0, 0.5), rng.uniform(0.3, 0.9));
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double fx = rng.uniform(-0.08, 0.08);
  const double fy = rng.uniform(-0.08, 0.08);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double amp = rng.uniform(0.0, 0.06);
  const double w = g.width();
  const double h = g.height();
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      double t = ((x - 0.5 * w) * std::cos(phi) + (y - 0.5 * h) * std::sin(phi)) / w + 0.5;
      t = std::clamp(t, 0.0, 1.0);
      const double tex = amp * std::sin(fx * x + fy * y + phase);
      for (int k = 0; k < 3; ++k) {
        const auto kk = static_cast<std::size_t>(k);
        const double v = (1.0 - t) * a[kk] + t * b[kk] + tex + rng.uniform(-0.02, 0.02);
        g.at(y, x, k) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
}

BBox paint_distractor(PixelGrid& g, Rng& rng) {
  const Color c = hsv(rng.uniform(), rng.uniform(0.3, 1.0), rng.uniform(0.2, 1.0));
  const double w = g.width();
  const double h = g.height();
  const int kind = rng.integer(0, 2);
  BBox box{0, 0, 0, 0, kDistractorClass, std::nullopt};
  if (kind == 0) {
    const double r = rng.uniform(8.0, 30.0);
    const double cx = rng.uniform(r, w - r);
    const double cy = rng.uniform(r, h - r);
    fill_disc(g, cx, cy, r, c);
    box = {cx - r, cy - r, cx + r, cy + r, kDistractorClass, std::nullopt};
  } else if (kind == 1) {
    const double bw = rng.uniform(12.0, 60.0);
    const double bh = rng.uniform(12.0, 60.0);
    const double x0 = rng.uniform(0.0, w - bw);
    const double y0 = rng.uniform(0.0, h - bh);
    fill_rect(g, x0, y0, x0 + bw, y0 + bh, c);
    box = {x0, y0, x0 + bw, y0 + bh, kDistractorClass, std::nullopt};
  } else {
    const double s = rng.uniform(16.0, 60.0);
    const double x0 = rng.uniform(0.0, w - s);
    const double y0 = rng.uniform(0.0, h - s);
    const std::array<std::array<double, 2>, 3> pts{
        {{x0 + rng.uniform(0.0, s), y0}, {x0, y0 + s}, {x0 + s, y0 + rng.uniform(0.5 * s, s)}}};
    fill_triangle(g, pts, c);
    box = {x0, y0, x0 + s, y0 + s, kDistractorClass, std::nullopt};
  }
  return box;
}

struct Figure {
  double height;
  double torso_half;
  double arm_angle[2];
  double leg_angle[2];
  Color skin;
  Color shirt;
  Color pants;

  // Geometry relative to (center x, top y).
  double head_r() const { return 0.095 * height; }
  double arm_r() const { return 0.035 * height; }
  double leg_r() const { return 0.045 * height; }
  double shoulder_y() const { return 0.23 * height; }
  double shoulder_dx() const { return torso_half - 0.02 * height; }
  double arm_len() const { return 0.32 * height; }
  double hip_y() const { return 0.56 * height; }
  double hip_dx() const { return 0.065 * height; }

  // Horizontal extent left (negative side) / right of the center line.
  std::pair<double, double> extent() const {
    double left = std::max(torso_half, head_r());
    double right = left;
    for (int s = 0; s < 2; ++s) {
      const double hand = shoulder_dx() + std::sin(arm_angle[s]) * arm_len() + arm_r();
      const double foot = hip_dx() + std::sin(leg_angle[s]) * leg_len(s) + leg_r();
      const double reach = std::max({hand, foot, shoulder_dx() + arm_r()});
      (s == 0 ? left : right) = std::max(s == 0 ? left : right, reach);
    }
    return {left, right};
  }
  double leg_len(int s) const {
    return (height - leg_r() - hip_y()) / std::cos(leg_angle[s]);
  }
};

Figure sample_figure(const SceneSpec& spec, Rng& rng) {
  Figure f{};
  f.height = rng.uniform(spec.min_person_height, spec.max_person_height);
  f.torso_half = 0.14 * f.height * rng.uniform(0.85, 1.15);
  const double deg = std::numbers::pi / 180.0;
  for (int s = 0; s < 2; ++s) {
    f.arm_angle[s] = rng.uniform(5.0, 30.0) * deg;
    f.leg_angle[s] = rng.uniform(0.0, 12.0) * deg;
  }
  static constexpr std::array<Color, 5> kSkin{
      {{0.96, 0.80, 0.69}, {0.88, 0.67, 0.52}, {0.76, 0.57, 0.42}, {0.55, 0.38, 0.26},
       {0.36, 0.24, 0.16}}};
  f.skin = kSkin[static_cast<std::size_t>(rng.integer(0, 4))];
  f.shirt = hsv(rng.uniform(), rng.uniform(0.55, 1.0), rng.uniform(0.45, 0.95));
  f.pants = hsv(rng.uniform(), rng.uniform(0.0, 0.5), rng.uniform(0.1, 0.45));
  return f;
}

BBox paint_figure(PixelGrid& g, const Figure& f, double cx, double top) {
  const double h = f.height;
  for (int s = 0; s < 2; ++s) {
    const double sign = s == 0 ? -1.0 : 1.0;
    const double hx = cx + sign * f.hip_dx();
    const double hy = top + f.hip_y();
    const double len = f.leg_len(s);
    fill_capsule(g, hx, hy, hx + sign * std::sin(f.leg_angle[s]) * len,
                 hy + std::cos(f.leg_angle[s]) * len, f.leg_r(), f.pants);
  }
  fill_rect(g, cx - f.torso_half, top + 0.2 * h, cx + f.torso_half, top + 0.58 * h, f.shirt);
  for (int s = 0; s < 2; ++s) {
    const double sign = s == 0 ? -1.0 : 1.0;
    const double sx = cx + sign * f.shoulder_dx();
    const double sy = top + f.shoulder_y();
    fill_capsule(g, sx, sy, sx + sign * std::sin(f.arm_angle[s]) * f.arm_len(),
                 sy + std::cos(f.arm_angle[s]) * f.arm_len(), f.arm_r(), f.shirt);
  }
  fill_disc(g, cx, top + f.head_r(), f.head_r(), f.skin);
  const auto [left, right] = f.extent();
  return {cx - left, top, cx + right, top + h, kPersonClass, std::nullopt};
}

void paint_print(PixelGrid& g, const BBox& person, const SceneSpec& spec, Rng& rng) {
  const double w = spec.print_rel_width * person.width() * rng.uniform(0.75, 1.1);
  const double h = w * spec.print_aspect;
  const double cx = person.center_x() + rng.uniform(-0.05, 0.05) * person.width();
  const double cy = person.y_min + spec.print_anchor * person.height();
  const double x0 = cx - 0.5 * w;
  const double y0 = cy - 0.5 * h;
  const int kind = rng.integer(spec.print_solid ? 0 : 1, 4);
  const auto random_color = [&rng] {
    return hsv(rng.uniform(), rng.uniform(0.0, 1.0), rng.uniform(0.1, 0.95));
  };
  const Color a = random_color();
  const Color b = random_color();
  const double period = rng.uniform(2.5, 9.0);
  const int orientation = rng.integer(0, 2);
  constexpr int kCells = 8;
  std::array<Color, kCells * kCells> cells{};
  if (kind == 3) {
    for (Color& c : cells) c = random_color();
  }
  const int xa = std::max(0, static_cast<int>(std::floor(x0)));
  const int xb = std::min(g.width() - 1, static_cast<int>(std::ceil(x0 + w)));
  const int ya = std::max(0, static_cast<int>(std::floor(y0)));
  const int yb = std::min(g.height() - 1, static_cast<int>(std::ceil(y0 + h)));
  for (int y = ya; y <= yb; ++y) {
    for (int x = xa; x <= xb; ++x) {
      const double u = x + 0.5 - x0;
      const double v = y + 0.5 - y0;
      if (u < 0.0 || u >= w || v < 0.0 || v >= h) continue;
      Color c = a;
      if (kind == 1) {
        const double t = orientation == 0 ? u : orientation == 1 ? v : u + v;
        c = static_cast<long>(std::floor(t / period)) % 2 == 0 ? a : b;
      } else if (kind == 2) {
        const long cu = static_cast<long>(std::floor(u / period));
        const long cv = static_cast<long>(std::floor(v / period));
        c = (cu + cv) % 2 == 0 ? a : b;
      } else if (kind == 3) {
        const int cu = std::min(kCells - 1, static_cast<int>(u / w * kCells));
        const int cv = std::min(kCells - 1, static_cast<int>(v / h * kCells));
        c = cells[static_cast<std::size_t>(cv * kCells + cu)];
      } else if (kind == 4) {
        const double t = orientation == 0 ? u / w : v / h;
        for (std::size_t k = 0; k < 3; ++k) c[k] = (1.0 - t) * a[k] + t * b[k];
      }
      put(g, x, y, c);
    }
  }
}

struct Targets {
  std::vector<std::int8_t> label;  // 1 positive, 0 negative, -1 ignore
  std::vector<std::array<double, 4>> box;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

Targets assign_targets(const std::vector<BBox>& anchors, const std::vector<BBox>& boxes,
                       const ToyDetectorConfig& cfg) {
  Targets t;
  t.label.assign(anchors.size(), 0);
  t.box.assign(anchors.size(), {0, 0, 0, 0});
  std::vector<const BBox*> persons;
  for (const BBox& b : boxes) {
    if (b.class_id == kPersonClass) persons.push_back(&b);
  }
  std::vector<double> best_iou(anchors.size(), 0.0);
  std::vector<int> best_gt(anchors.size(), -1);
  for (std::size_t g = 0; g < persons.size(); ++g) {
    double top = -1.0;
    std::size_t top_a = 0;
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      const double v = iou(anchors[a], *persons[g]);
      if (v > best_iou[a]) {
        best_iou[a] = v;
        best_gt[a] = static_cast<int>(g);
      }
      if (v > top) {
        top = v;
        top_a = a;
      }
    }
    // Every person keeps at least its best-matching anchor.
    best_iou[top_a] = std::max(best_iou[top_a], cfg.positive_iou);
    best_gt[top_a] = static_cast<int>(g);
  }
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (best_iou[a] >= cfg.positive_iou) {
      t.label[a] = 1;
      t.box[a] = encode_box(*persons[static_cast<std::size_t>(best_gt[a])], anchors[a]);
      ++t.positives;
    } else if (best_iou[a] >= cfg.negative_iou) {
      t.label[a] = -1;
    } else {
      ++t.negatives;
    }
  }
  return t;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// Loss and head gradient for one image.
double image_loss(const nn::Tensor& head, const Targets& t, const ToyDetectorConfig& cfg,
                  nn::Tensor& grad) {
  const int k = static_cast<int>(cfg.anchors.size());
  grad = nn::Tensor(head.channels, head.height, head.width);
  const double pos_w = t.positives > 0 ? 1.0 / static_cast<double>(t.positives) : 0.0;
  const double neg_w = t.negatives > 0 ? 1.0 / static_cast<double>(t.negatives) : 0.0;
  double loss = 0.0;
  std::size_t i = 0;
  for (int gy = 0; gy < head.height; ++gy) {
    for (int gx = 0; gx < head.width; ++gx) {
      for (int a = 0; a < k; ++a, ++i) {
        const std::int8_t label = t.label[i];
        if (label < 0) continue;
        const double s = head.at(a * 5, gy, gx);
        if (label == 1) {
          loss += pos_w * (softplus(s) - s);
          grad.at(a * 5, gy, gx) = pos_w * (sigmoid(s) - 1.0);
          for (int j = 0; j < 4; ++j) {
            const double d = head.at(a * 5 + 1 + j, gy, gx) - t.box[i][static_cast<std::size_t>(j)];
            const double ad = std::abs(d);
            loss += cfg.box_loss_weight * pos_w * (ad < 1.0 ? 0.5 * d * d : ad - 0.5);
            grad.at(a * 5 + 1 + j, gy, gx) =
                cfg.box_loss_weight * pos_w * std::clamp(d, -1.0, 1.0);
          }
        } else {
          loss += neg_w * softplus(s);
          grad.at(a * 5, gy, gx) = neg_w * sigmoid(s);
        }
      }
    }
  }
  return loss;
}

DistortionSpec random_degradation(Rng& rng) {
  switch (rng.integer(0, 2)) {
    case 0: return {{DistortionStage::blur(rng.uniform(0.5, 2.0))}};
    case 1: return {{DistortionStage::jpeg(rng.integer(15, 90))}};
    default: return {{DistortionStage::pixelate(rng.integer(2, 4))}};
  }
}

std::vector<EvalRecord> detector_records(const ToyDetector& det, const ImageSource& data,
                                         int jobs) {
  std::vector<EvalRecord> records(data.size());
  parallel_for(data.size(), jobs, [&](std::size_t i) {
    const LabeledImage sample = data.at(i);
    records[i].image_id = sample.image.source_id;
    records[i].gts = sample.boxes;
    records[i].detections = select_detections(det.candidates(sample.image), -8.0, 0.45);
  });
  return records;
}

}  // namespace

void SceneSpec::validate() const {
  if (min_persons < 0 || max_persons < min_persons) throw ConfigError("scene: bad person range");
  if (min_distractors < 0 || max_distractors < min_distractors) {
    throw ConfigError("scene: bad distractor range");
  }
  if (!(min_person_height > 0.0) || max_person_height < min_person_height) {
    throw ConfigError("scene: bad person height range");
  }
  if (!(print_probability >= 0.0 && print_probability <= 1.0)) {
    throw ConfigError("scene: print probability must be in [0,1]");
  }
  if (!(print_rel_width > 0.0) || !(print_aspect > 0.0)) {
    throw ConfigError("scene: print size must be positive");
  }
  // The widest possible figure is about 0.7x its height.
  if (height < max_person_height + 2.0 || width < 0.75 * max_person_height + 2.0) {
    throw ConfigError("scene: canvas too small for the largest person");
  }
}

LabeledImage gen_scene(const SceneSpec& spec, std::uint64_t index) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, {index}));
  LabeledImage out;
  out.image.pixels = PixelGrid(spec.height, spec.width);
  out.image.source_id = "scene-" + std::to_string(spec.seed) + "-" + std::to_string(index);
  paint_background(out.image.pixels, rng);

  const int n_distractors = rng.integer(spec.min_distractors, spec.max_distractors);
  std::vector<BBox> distractors;
  for (int d = 0; d < n_distractors; ++d) distractors.push_back(paint_distractor(out.image.pixels, rng));

  const int n_persons = rng.integer(spec.min_persons, spec.max_persons);
  std::vector<BBox> persons;
  for (int p = 0; p < n_persons; ++p) {
    const Figure f = sample_figure(spec, rng);
    const auto [left, right] = f.extent();
    for (int attempt = 0; attempt < 40; ++attempt) {
      const double cx = rng.uniform(left + 1.0, spec.width - right - 1.0);
      const double top = rng.uniform(1.0, spec.height - f.height - 1.0);
      const BBox candidate{cx - left, top, cx + right, top + f.height, kPersonClass, std::nullopt};
      const bool clear = std::all_of(persons.begin(), persons.end(), [&](const BBox& o) {
        return iou(o, candidate) < 0.2 && coverage_fraction(o, candidate) < 0.3 &&
               coverage_fraction(candidate, o) < 0.3;
      });
      if (!clear && !persons.empty()) continue;
      persons.push_back(paint_figure(out.image.pixels, f, cx, top));
      if (spec.print_probability > 0.0 && rng.uniform() < spec.print_probability) {
        paint_print(out.image.pixels, persons.back(), spec, rng);
      }
      break;
    }
  }
  out.boxes = persons;
  out.boxes.insert(out.boxes.end(), distractors.begin(), distractors.end());
  return out;
}

std::vector<LabeledImage> gen_scenes(const SceneSpec& spec, std::uint64_t first,
                                     std::size_t count, int jobs) {
  std::vector<LabeledImage> out(count);
  parallel_for(count, jobs, [&](std::size_t i) { out[i] = gen_scene(spec, first + i); });
  return out;
}

SceneSource::SceneSource(SceneSpec spec, std::uint64_t first, std::size_t count)
    : spec_(spec), first_(first), count_(count) {
  spec_.validate();
}

LabeledImage SceneSource::at(std::size_t index) const { return gen_scene(spec_, first_ + index); }

std::vector<nn::ConvSpec> ToyDetectorConfig::layers() const {
  const int c = hidden_channels;
  const int head = static_cast<int>(anchors.size()) * 5;
  return {{3, 16, 4, 4, 0}, {16, c, 3, 2, 1}, {c, c, 3, 2, 1}, {c, c, 3, 1, 1},
          {c, c, 3, 1, 1},  {c, c, 3, 1, 1},  {c, head, 1, 1, 0}};
}

void ToyDetectorConfig::validate() const {
  if (input_size % stride != 0) throw ConfigError("toy detector: input size not a stride multiple");
  if (stride != 16) throw ConfigError("toy detector: backbone has output stride 16");
  if (anchors.empty()) throw ConfigError("toy detector: need at least one anchor");
  if (epochs <= 0 || batch_size <= 0 || !(learning_rate > 0.0)) {
    throw ConfigError("toy detector: epochs, batch size and learning rate must be positive");
  }
  if (!(negative_iou <= positive_iou)) throw ConfigError("toy detector: IoU thresholds inverted");
  if (!(degrade_probability >= 0.0 && degrade_probability <= 1.0)) {
    throw ConfigError("toy detector: degrade probability must be in [0,1]");
  }
}

std::array<double, 4> encode_box(const BBox& box, const BBox& anchor) {
  const CenterBox b = to_center(box);
  const CenterBox a = to_center(anchor);
  return {(b.cx - a.cx) / a.w, (b.cy - a.cy) / a.h, std::log(b.w / a.w), std::log(b.h / a.h)};
}

BBox decode_box(const std::array<double, 4>& t, const BBox& anchor) {
  const CenterBox a = to_center(anchor);
  const double tw = std::clamp(t[2], -4.0, 4.0);
  const double th = std::clamp(t[3], -4.0, 4.0);
  return from_center({a.cx + t[0] * a.w, a.cy + t[1] * a.h, a.w * std::exp(tw), a.h * std::exp(th)},
                     kPersonClass);
}

std::vector<BBox> make_anchors(const ToyDetectorConfig& cfg) {
  const int cells = cfg.input_size / cfg.stride;
  std::vector<BBox> anchors;
  anchors.reserve(static_cast<std::size_t>(cells * cells) * cfg.anchors.size());
  for (int gy = 0; gy < cells; ++gy) {
    for (int gx = 0; gx < cells; ++gx) {
      for (const AnchorShape& s : cfg.anchors) {
        anchors.push_back(from_center(
            {(gx + 0.5) * cfg.stride, (gy + 0.5) * cfg.stride, s.width, s.height}, kPersonClass));
      }
    }
  }
  return anchors;
}

ToyDetector::ToyDetector(ToyDetectorConfig cfg, nn::ConvNet net)
    : cfg_(std::move(cfg)), net_(std::move(net)), anchors_(make_anchors(cfg_)) {
  cfg_.validate();
}

InputConvention ToyDetector::input_convention() const {
  return InputConvention::square(cfg_.input_size, 32);
}

std::size_t ToyDetector::prior_count(int, int) const { return anchors_.size(); }

nn::Tensor ToyDetector::preprocess(const ImageBuffer& image) const {
  if (std::min(image.height(), image.width()) < input_convention().min_side) {
    throw InputError("toy detector: image smaller than the 32 px minimum");
  }
  const PixelGrid resized = resize_bilinear(image.pixels, cfg_.input_size, cfg_.input_size);
  nn::Tensor t(3, cfg_.input_size, cfg_.input_size);
  for (int y = 0; y < cfg_.input_size; ++y) {
    for (int x = 0; x < cfg_.input_size; ++x) {
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = resized.at(y, x, c) - 0.5;
    }
  }
  return t;
}

ScoreMap ToyDetector::make_score_map(const nn::Tensor& head, int height, int width) const {
  ScoreMap m;
  m.detector_id = cfg_.id;
  const double sx = static_cast<double>(width) / cfg_.input_size;
  const double sy = static_cast<double>(height) / cfg_.input_size;
  const int k = static_cast<int>(cfg_.anchors.size());
  m.scores.reserve(anchors_.size());
  m.priors.reserve(anchors_.size());
  std::size_t i = 0;
  for (int gy = 0; gy < head.height; ++gy) {
    for (int gx = 0; gx < head.width; ++gx) {
      for (int a = 0; a < k; ++a, ++i) {
        m.scores.push_back(head.at(a * 5, gy, gx));
        const BBox& p = anchors_[i];
        m.priors.push_back({p.x_min * sx, p.y_min * sy, p.x_max * sx, p.y_max * sy, kPersonClass,
                            std::nullopt});
      }
    }
  }
  return m;
}

ScoreMap ToyDetector::score_map(const ImageBuffer& image) const {
  return make_score_map(net_.forward(preprocess(image)), image.height(), image.width());
}

ScoreMap ToyDetector::score_map_vjp(const ImageBuffer& image, const ScoreGradFn& loss_grad,
                                    std::vector<double>& image_grad) const {
  const nn::Tensor input = preprocess(image);
  nn::ConvNet::Workspace ws;
  const nn::Tensor head = net_.forward(input, &ws);
  ScoreMap map = make_score_map(head, image.height(), image.width());
  const std::vector<double> dscore = loss_grad(map);
  if (dscore.size() != map.scores.size()) throw ConfigError("score gradient has the wrong length");

  nn::Tensor grad_head(head.channels, head.height, head.width);
  const int k = static_cast<int>(cfg_.anchors.size());
  std::size_t i = 0;
  for (int gy = 0; gy < head.height; ++gy) {
    for (int gx = 0; gx < head.width; ++gx) {
      for (int a = 0; a < k; ++a, ++i) grad_head.at(a * 5, gy, gx) = dscore[i];
    }
  }
  nn::Tensor grad_input;
  net_.backward(ws, input, grad_head, {}, &grad_input);

  const int s = cfg_.input_size;
  std::vector<double> resized_grad(static_cast<std::size_t>(s) * s * 3);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      for (int c = 0; c < 3; ++c) {
        resized_grad[(static_cast<std::size_t>(y) * s + x) * 3 + c] = grad_input.at(c, y, x);
      }
    }
  }
  image_grad.assign(image.pixels.size(), 0.0);
  if (image.height() == s && image.width() == s) {
    image_grad = std::move(resized_grad);
  } else {
    make_resize_plan(image.height(), image.width(), s, s)
        .accumulate_transpose(resized_grad, image_grad);
  }
  return map;
}

std::vector<BBox> ToyDetector::candidates(const ImageBuffer& image) const {
  const nn::Tensor head = net_.forward(preprocess(image));
  const double sx = static_cast<double>(image.width()) / cfg_.input_size;
  const double sy = static_cast<double>(image.height()) / cfg_.input_size;
  const int k = static_cast<int>(cfg_.anchors.size());
  std::vector<BBox> out;
  out.reserve(anchors_.size());
  std::size_t i = 0;
  for (int gy = 0; gy < head.height; ++gy) {
    for (int gx = 0; gx < head.width; ++gx) {
      for (int a = 0; a < k; ++a, ++i) {
        BBox b = decode_box({head.at(a * 5 + 1, gy, gx), head.at(a * 5 + 2, gy, gx),
                             head.at(a * 5 + 3, gy, gx), head.at(a * 5 + 4, gy, gx)},
                            anchors_[i]);
        b.x_min = std::clamp(b.x_min * sx, 0.0, static_cast<double>(image.width()));
        b.x_max = std::clamp(b.x_max * sx, 0.0, static_cast<double>(image.width()));
        b.y_min = std::clamp(b.y_min * sy, 0.0, static_cast<double>(image.height()));
        b.y_max = std::clamp(b.y_max * sy, 0.0, static_cast<double>(image.height()));
        b.score = head.at(a * 5, gy, gx);
        out.push_back(b);
      }
    }
  }
  return out;
}

void ToyDetector::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "cloak-toydet-v1";
  j["id"] = cfg_.id;
  j["input_size"] = cfg_.input_size;
  j["stride"] = cfg_.stride;
  j["hidden_channels"] = cfg_.hidden_channels;
  j["seed"] = cfg_.seed;
  nlohmann::json anchors = nlohmann::json::array();
  for (const AnchorShape& a : cfg_.anchors) anchors.push_back({a.width, a.height});
  j["anchors"] = anchors;
  j["validation_ap"] = val_ap_;
  j["calibrated_threshold"] = threshold_ ? nlohmann::json(*threshold_) : nlohmann::json(nullptr);
  j["parameters"] = std::vector<double>(net_.parameters().begin(), net_.parameters().end());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write detector weights to " + path.string());
  out << j.dump();
}

std::shared_ptr<ToyDetector> ToyDetector::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("detector weights not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed detector weights " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "cloak-toydet-v1") {
    throw DataError("unsupported detector weights format in " + path.string());
  }
  ToyDetectorConfig cfg;
  cfg.id = j.at("id").get<std::string>();
  cfg.input_size = j.at("input_size").get<int>();
  cfg.stride = j.at("stride").get<int>();
  cfg.hidden_channels = j.at("hidden_channels").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.anchors.clear();
  for (const auto& a : j.at("anchors")) cfg.anchors.push_back({a.at(0).get<double>(), a.at(1).get<double>()});
  nn::ConvNet net(cfg.layers());
  const auto params = j.at("parameters").get<std::vector<double>>();
  if (params.size() != net.parameter_count()) {
    throw DataError("detector weights have the wrong parameter count");
  }
  std::copy(params.begin(), params.end(), net.parameters().begin());
  auto det = std::make_shared<ToyDetector>(cfg, std::move(net));
  det->set_validation_ap(j.value("validation_ap", 0.0));
  if (!j.at("calibrated_threshold").is_null()) {
    det->set_calibrated_threshold(j.at("calibrated_threshold").get<double>());
  }
  return det;
}

std::shared_ptr<ToyDetector> train_toy_detector(const ToyDetectorConfig& cfg,
                                                const ImageSource& train,
                                                const ImageSource& val,
                                                ToyTrainReport* report) {
  cfg.validate();
  if (train.size() == 0 || val.size() == 0) {
    throw DataError("toy detector: empty train or val split");
  }
  // Targets are computed once; images are re-read every epoch.
  std::vector<std::vector<BBox>> train_boxes(train.size());
  std::set<std::string> train_ids;
  for (std::size_t i = 0; i < train.size(); ++i) {
    LabeledImage s = train.at(i);
    train_ids.insert(s.image.source_id);
    train_boxes[i] = std::move(s.boxes);
  }
  for (std::size_t i = 0; i < val.size(); ++i) {
    const std::string id = val.at(i).image.source_id;
    if (train_ids.contains(id)) {
      throw DataError("toy detector: train and val splits share image " + id);
    }
  }

  nn::ConvNet net(cfg.layers());
  net.initialize(derive_seed(cfg.seed, {0x7e1}));
  auto det = std::make_shared<ToyDetector>(cfg, std::move(net));
  const std::vector<BBox> anchors = make_anchors(cfg);

  std::vector<Targets> targets(train.size());
  parallel_for(train.size(), cfg.jobs,
               [&](std::size_t i) { targets[i] = assign_targets(anchors, train_boxes[i], cfg); });

  nn::ConvNet& model = det->network();
  Adam adam(model.parameter_count(), cfg.learning_rate);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  ToyTrainReport local;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    adam.set_learning_rate(step_decay(cfg.learning_rate, epoch, cfg.lr_decay_every,
                                      cfg.lr_decay_factor));
    Rng rng(derive_seed(cfg.seed, {0xe90c, static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t n = end - start;
      std::vector<std::vector<double>> grads(n);
      std::vector<double> losses(n);
      parallel_for(n, cfg.jobs, [&](std::size_t b) {
        const std::size_t idx = order[start + b];
        ImageBuffer image = train.at(idx).image;
        if (cfg.degrade_probability > 0.0) {
          Rng aug(derive_seed(cfg.seed, {0xde9, static_cast<std::uint64_t>(epoch), idx}));
          if (aug.uniform() < cfg.degrade_probability) image = apply(random_degradation(aug), image);
        }
        const nn::Tensor input = det->preprocess(image);
        nn::ConvNet::Workspace ws;
        const nn::Tensor head = model.forward(input, &ws);
        nn::Tensor grad_head;
        losses[b] = image_loss(head, targets[idx], cfg, grad_head);
        grads[b].assign(model.parameter_count(), 0.0);
        model.backward(ws, input, grad_head, grads[b], nullptr);
      });
      std::vector<double> total(model.parameter_count(), 0.0);
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t p = 0; p < total.size(); ++p) total[p] += grads[b][p] / static_cast<double>(n);
        epoch_loss += losses[b];
      }
      adam.step(model.parameters(), total);
    }
    epoch_loss /= static_cast<double>(train.size());
    if (!std::isfinite(epoch_loss)) throw TrainingFailureError("toy detector training diverged");
    local.epoch_loss.push_back(epoch_loss);
  }

  // The class-balanced loss leaves logits offset from even odds. Fold the
  // F1-optimal threshold into the head bias so that logit 0 is the operating
  // point, then tune again on the shifted scores.
  std::vector<EvalRecord> records = detector_records(*det, val, cfg.jobs);
  const double offset = tune_threshold(records, kPersonClass, 0.5).threshold;
  std::span<double> head_bias = det->network().bias(det->network().layers().size() - 1);
  for (std::size_t a = 0; a < cfg.anchors.size(); ++a) head_bias[a * 5] -= offset;
  records = detector_records(*det, val, cfg.jobs);
  local.val_ap = average_precision(records, kPersonClass, 0.5, false);
  const ThresholdChoice choice = tune_threshold(records, kPersonClass, 0.5);
  local.threshold = choice.threshold;
  local.logit_offset = offset;
  det->set_validation_ap(local.val_ap);
  det->set_calibrated_threshold(choice.threshold);
  if (report != nullptr) *report = local;
  if (local.val_ap < cfg.ap_floor) {
    throw TrainingFailureError("toy detector reached val AP " + std::to_string(local.val_ap) +
                               " below the floor " + std::to_string(cfg.ap_floor) + " after " +
                               std::to_string(cfg.epochs) + " epochs (final train loss " +
                               std::to_string(local.epoch_loss.back()) + ")");
  }
  return det;
}

void register_toy_factory(AdapterRegistry& registry) {
  registry.add_factory("toy", [](const std::string& rest) -> std::shared_ptr<const DetectorAdapter> {
    std::filesystem::path path(rest);
    if (rest.find('/') == std::string::npos && path.extension() != ".json") {
      const char* cache = std::getenv("CLOAK_CACHE");
      path = std::filesystem::path(cache != nullptr ? cache : ".cloak_cache") / (rest + ".json");
    }
    return ToyDetector::load(path);
  });
}

}  // namespace cloak
