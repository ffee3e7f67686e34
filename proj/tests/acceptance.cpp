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

// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cloak/distortion.hpp"
#include "cloak/errors.hpp"
#include "cloak/image_io.hpp"
#include "cloak/metrics.hpp"
#include "cloak/objective.hpp"
#include "cloak/renderer.hpp"
#include "cloak/rng.hpp"
#include "cloak/toydet.hpp"
#include "cloak/trainer.hpp"

namespace {

using namespace cloak;
using Clock = std::chrono::steady_clock;
using DetectorList = std::vector<std::shared_ptr<const DetectorAdapter>>;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

BBox box(double x0, double y0, double x1, double y1, std::optional<double> score = std::nullopt) {
  return BBox{x0, y0, x1, y1, kPersonClass, score};
}

PixelGrid random_grid(int h, int w, std::uint64_t seed, double lo, double hi) {
  PixelGrid g(h, w);
  Rng rng(seed);
  for (double& v : g.values()) v = rng.uniform(lo, hi);
  return g;
}

// The shared toy stack used by criteria 5, 6 and 9.
struct Stack {
  SceneSpec scene;
  std::shared_ptr<ToyDetector> white_box;
  std::shared_ptr<ToyDetector> second_seed;
  ToyTrainReport white_report;
  ToyTrainReport second_report;
  AttackConfig attack;
  EvalOptions eval;
  std::unique_ptr<SceneSource> attack_images;
  std::unique_ptr<SceneSource> test_images;
  Patch trained;
  double train_seconds = 0.0;
};

ToyDetectorConfig detector_config(std::uint64_t seed, const std::string& id) {
  ToyDetectorConfig c;
  c.id = id;
  c.seed = seed;
  c.epochs = 10;
  c.lr_decay_every = 6;
  c.degrade_probability = 0.5;
  return c;
}

AttackConfig attack_config(const std::string& detector_id) {
  AttackConfig c;
  c.patch_height = 50;
  c.patch_width = 30;
  c.detectors = {detector_id};
  c.epochs = 60;
  c.learning_rate = 0.03;
  c.lr_decay_every = 45;
  c.seed = 3;
  c.rule.rel_width = 0.6;
  return c;
}

Stack& stack() {
  static Stack s = [] {
    Stack st;
    st.scene.seed = 7;
    st.scene.print_probability = 0.5;
    const SceneSource train(st.scene, 0, 600);
    const SceneSource val(st.scene, 100000, 150);
    st.white_box = train_toy_detector(detector_config(1, "toy-s1"), train, val, &st.white_report);
    st.second_seed = train_toy_detector(detector_config(2, "toy-s2"), train, val, &st.second_report);

    SceneSpec attack_scene = st.scene;
    attack_scene.seed = 21;
    st.attack_images = std::make_unique<SceneSource>(attack_scene, 0, 100);
    st.test_images = std::make_unique<SceneSource>(attack_scene, 50000, 150);
    st.attack = attack_config(st.white_box->id());
    st.eval.rule = st.attack.rule;
    st.eval.render = st.attack.render;

    const auto t0 = Clock::now();
    const DetectorList dets{st.white_box};
    st.trained = train_patch(st.attack, dets, *st.attack_images);
    st.train_seconds = seconds_since(t0);
    return st;
  }();
  return s;
}

EvalResult eval_with(const DetectorAdapter& det, const std::optional<Patch>& patch) {
  Stack& st = stack();
  EvalOptions o = st.eval;
  o.patch = patch;
  return evaluate(det, *st.test_images, o);
}

// --- 1: loss oracles -------------------------------------------------------

void criterion1(Verdict& v) {
  const double obj = objectness_loss(std::vector<double>{1.0, -2.0, 0.5});
  v.require(obj == 6.25, "objectness_loss([1,-2,0.5]) == 6.25");

  Rng rng(11);
  bool all_zero = true;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> s(1 + rng.index(20));
    for (double& x : s) x = rng.uniform(-10.0, -1.0);
    if (trial == 0) std::fill(s.begin(), s.end(), -1.0);
    all_zero = all_zero && objectness_loss(s) == 0.0;
  }
  v.require(all_zero, "objectness_loss == 0 for scores <= -1");

  PixelGrid step(2, 2);
  step.at(0, 1, 0) = 1.0;
  step.at(1, 1, 0) = 1.0;
  const double tv_plain = tv_penalty(step, 0.0);
  // Two unit steps carry sqrt(1+eps); the ten zero differences carry sqrt(eps).
  const double eps_share = 2.0 * (std::sqrt(1.0 + kTvEpsilon) - 1.0) + 10.0 * std::sqrt(kTvEpsilon);
  const double tv_eps = tv_penalty(step) - eps_share;
  v.require(std::abs(tv_plain - 2.0) <= 1e-6, "TV(eps=0) == 2");
  v.require(std::abs(tv_eps - 2.0) <= 1e-6, "TV(eps) - eps share == 2");
  v.detail << "obj=" << obj << " tv=" << tv_plain << " tv_eps_corrected=" << tv_eps;
}

// --- 2: gradient check -----------------------------------------------------

void criterion2(Verdict& v) {
  SceneSpec spec;
  spec.seed = 13;
  spec.min_persons = spec.max_persons = 1;
  spec.max_distractors = 0;
  spec.min_person_height = 120.0;
  const SceneSource data(spec, 0, 1);

  ToyDetectorConfig dcfg;
  nn::ConvNet net(dcfg.layers());
  net.initialize(5);
  const DetectorList dets{std::make_shared<ToyDetector>(dcfg, std::move(net))};

  double worst = 0.0;
  double loss_seen = 0.0;
  for (int mode = 0; mode < 2; ++mode) {
    AttackConfig cfg;
    cfg.patch_height = 8;
    cfg.patch_width = 8;
    cfg.placement = PlacementSource::kGroundTruth;
    cfg.rule.rel_width = 0.6;
    cfg.ranges = AugmentationRanges::identity();
    if (mode == 1) {
      cfg.ranges.rotation_deg = {5.0, 5.0};
      cfg.ranges.scale_jitter = {1.1, 1.1};
      cfg.ranges.tps_enabled = true;
      cfg.ranges.tps_max_offset = 0.05;
    }
    const PatchObjective obj(cfg, dets, data);
    Patch patch;
    patch.pixels = random_grid(8, 8, 17, 0.2, 0.8);
    const std::vector<std::size_t> batch{0};
    std::vector<double> grad;
    loss_seen = std::max(loss_seen, obj.objectness(patch, batch, 0, &grad));

    const double h = 1e-5;
    double diff2 = 0.0, g2 = 0.0, fd2 = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      Patch plus = patch, minus = patch;
      plus.pixels.values()[i] += h;
      minus.pixels.values()[i] -= h;
      const double fd = (obj.objectness(plus, batch, 0) - obj.objectness(minus, batch, 0)) / (2.0 * h);
      diff2 += (grad[i] - fd) * (grad[i] - fd);
      g2 += grad[i] * grad[i];
      fd2 += fd * fd;
    }
    v.require(g2 > 0.0, "non-zero gradient");
    worst = std::max(worst, std::sqrt(diff2) / std::max(std::sqrt(std::max(g2, fd2)), 1e-300));
  }
  v.require(loss_seen > 0.0, "non-zero loss");
  v.require(worst < 1e-3, "relative error < 1e-3");
  v.detail << "relative_error=" << worst << " (plain and rotated+TPS placements, 192 entries each)";
}

// --- 3: metric oracles -----------------------------------------------------

struct Labeled {
  double score;
  bool tp;
};

// Greedy matching: one label per detection in descending score order.
std::vector<Labeled> label(const std::vector<EvalRecord>& records, std::size_t* positives) {
  std::vector<Labeled> out;
  *positives = 0;
  for (const EvalRecord& r : records) {
    *positives += r.gts.size();
    std::vector<std::size_t> order(r.detections.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return *r.detections[a].score > *r.detections[b].score; });
    std::vector<bool> taken(r.gts.size(), false);
    for (std::size_t i : order) {
      double best = 0.0;
      int best_j = -1;
      for (std::size_t j = 0; j < r.gts.size(); ++j) {
        const double o = iou(r.detections[i], r.gts[j]);
        if (!taken[j] && o > best) {
          best = o;
          best_j = static_cast<int>(j);
        }
      }
      const bool tp = best_j >= 0 && best >= 0.5;
      if (tp) taken[static_cast<std::size_t>(best_j)] = true;
      out.push_back({*r.detections[i].score, tp});
    }
  }
  return out;
}

ThresholdChoice scan_threshold(const std::vector<EvalRecord>& records) {
  std::size_t positives = 0;
  const std::vector<Labeled> labels = label(records, &positives);
  ThresholdChoice best{-std::numeric_limits<double>::infinity(), -1.0};
  for (const Labeled& cut : labels) {
    double tp = 0.0, fp = 0.0;
    for (const Labeled& l : labels) {
      if (l.score >= cut.score) (l.tp ? tp : fp) += 1.0;
    }
    const double f1 = tp == 0.0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + (double(positives) - tp));
    if (f1 > best.f1 || (f1 == best.f1 && cut.score > best.threshold)) best = {cut.score, f1};
  }
  return best;
}

void criterion3(Verdict& v) {
  EvalRecord ap_record;
  ap_record.gts = {box(0, 0, 10, 20), box(30, 0, 40, 20)};
  ap_record.patched_gt_ids = {0, 1};
  ap_record.detections = {box(0, 0, 10, 20, 0.9), box(60, 60, 70, 80, 0.8), box(30, 0, 40, 20, 0.7)};
  const double ap = average_precision(std::vector<EvalRecord>{ap_record}, kPersonClass);
  // 0.5 * 1 + 0.5 * 2/3 rounds one ulp below the literal 5.0 / 6.0.
  v.require(std::abs(ap - 5.0 / 6.0) <= 4.0 * std::numeric_limits<double>::epsilon(), "AP fixture == 5/6");

  EvalRecord t;
  t.gts = {box(0, 0, 10, 20), box(30, 0, 40, 20), box(60, 0, 70, 20)};
  t.detections = {box(0, 0, 10, 20, 2.5), box(100, 100, 110, 120, 1.5), box(30, 0, 40, 20, 0.5),
                  box(200, 0, 210, 20, 0.2), box(60, 0, 70, 20, -0.4)};
  const std::vector<EvalRecord> tr{t};
  const ThresholdChoice got = tune_threshold(tr, kPersonClass);
  const ThresholdChoice want = scan_threshold(tr);
  v.require(got.threshold == want.threshold && got.f1 == want.f1, "tune_threshold == exhaustive scan");

  const BBox person = box(0, 0, 10, 10);
  const std::vector<BBox> none;
  const std::vector<BBox> partial{box(0, 0, 10, 4, 1.0)};
  const std::vector<BBox> failure{box(0, 0, 10, 8, 1.0)};
  v.require(classify_outcome(none, person) == Outcome::kSuccess, "no box -> SUCCESS");
  v.require(classify_outcome(partial, person) == Outcome::kPartial, "coverage 0.4 -> PARTIAL");
  v.require(classify_outcome(failure, person) == Outcome::kFailure, "coverage 0.8 -> FAILURE");
  v.detail << "ap=" << ap << " threshold=" << got.threshold << " f1=" << got.f1;
}

// --- 4: renderer invariants ------------------------------------------------

void criterion4(Verdict& v) {
  std::size_t checked = 0;
  bool outside_ok = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const ImageBuffer img{random_grid(64, 64, seed, 0.0, 1.0), "img"};
    Patch patch;
    patch.pixels = random_grid(25, 15, seed + 100, 0.0, 1.0);
    std::vector<BBox> persons;
    std::vector<RenderParams> params;
    AugmentationRanges ranges;
    ranges.tps_enabled = true;
    for (int b = 0; b < 3; ++b) {
      const double x = rng.uniform(-10, 50), y = rng.uniform(-10, 40);
      persons.push_back(box(x, y, x + rng.uniform(8, 30), y + rng.uniform(20, 50)));
      params.push_back(sample_params(seed * 10 + std::uint64_t(b), ranges));
    }
    RenderOptions opts;
    opts.edge_blend = seed % 2 == 1;
    const PlacementRule rule;
    const ImageBuffer out = render(img, patch, persons, params, rule, opts);
    // Footprints: pixel centers inside the transformed patch parallelogram.
    std::vector<bool> inside(64 * 64, false);
    for (std::size_t b = 0; b < persons.size(); ++b) {
      const auto m = augmented_placement(persons[b], rule, 25, 15, params[b]);
      if (!m) continue;
      const Eigen::Vector2d o = m->apply({0.0, 0.0});
      const Eigen::Vector2d ex = m->apply({15.0, 0.0}) - o;
      const Eigen::Vector2d ey = m->apply({0.0, 25.0}) - o;
      const double det = ex.x() * ey.y() - ex.y() * ey.x();
      for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
          const Eigen::Vector2d q = Eigen::Vector2d(x + 0.5, y + 0.5) - o;
          const double s = (q.x() * ey.y() - q.y() * ey.x()) / det;
          const double t = (ex.x() * q.y() - ex.y() * q.x()) / det;
          if (s > -1e-6 && s < 1 + 1e-6 && t > -1e-6 && t < 1 + 1e-6) inside[std::size_t(y) * 64 + x] = true;
        }
      }
    }
    for (int y = 0; y < 64; ++y) {
      for (int x = 0; x < 64; ++x) {
        if (inside[std::size_t(y) * 64 + x]) continue;
        for (int c = 0; c < 3; ++c) {
          outside_ok = outside_ok && out.pixels.at(y, x, c) == img.pixels.at(y, x, c);
          ++checked;
        }
      }
    }
  }
  v.require(outside_ok, "outside pixels bitwise unchanged");

  const PixelGrid p = random_grid(25, 15, 3, 0.0, 1.0);
  double tps_err = 0.0;
  for (int n : {3, 4, 5}) {
    const PixelGrid w = tps_warp(p, TpsOffsets::zeros(n, n));
    for (std::size_t i = 0; i < p.size(); ++i) tps_err = std::max(tps_err, std::abs(w.values()[i] - p.values()[i]));
  }
  v.require(tps_err <= 1e-6, "zero-offset TPS within 1e-6");

  const ImageBuffer img{random_grid(40, 40, 5, 0.0, 1.0), "img"};
  Patch patch;
  patch.pixels = random_grid(4, 6, 6, 0.0, 1.0);
  PlacementRule native;
  native.rel_width = 1.0;
  native.vertical_anchor = 0.5;
  const std::vector<BBox> persons{box(10, 20, 16, 24)};
  const std::vector<RenderParams> identity(1);
  const ImageBuffer out = render(img, patch, persons, identity, native);
  bool exact = true;
  for (int y = 0; y < 40; ++y) {
    for (int x = 0; x < 40; ++x) {
      const bool in = x >= 10 && x < 16 && y >= 20 && y < 24;
      for (int c = 0; c < 3; ++c) {
        exact = exact && out.pixels.at(y, x, c) == (in ? patch.pixels.at(y - 20, x - 10, c) : img.pixels.at(y, x, c));
      }
    }
  }
  v.require(exact, "identity placement exact");
  v.detail << "outside_values_checked=" << checked << " tps_max_error=" << tps_err;
}

// --- 5 and 6: attack strength and transfer ---------------------------------

void criterion5(Verdict& v) {
  Stack& st = stack();
  const EvalResult clean = eval_with(*st.white_box, std::nullopt);
  const EvalResult grey = eval_with(*st.white_box, make_grey_patch(50, 30));
  const EvalResult attacked = eval_with(*st.white_box, st.trained);
  v.require(st.white_report.val_ap >= 0.8, "detector val AP >= 0.80");
  v.require(clean.ap >= 0.8, "clean AP >= 0.80");
  v.require(clean.patched_ap - grey.patched_ap >= 0.10, "CLEAN - GREY >= 0.10");
  v.require(grey.patched_ap - attacked.patched_ap >= 0.10, "GREY - trained >= 0.10");
  v.require(attacked.patched_ap <= 0.5 * grey.patched_ap, "trained <= 0.5 x GREY");
  v.require(st.attack.epochs <= 60, "<= 60 epochs");
  v.detail << "val_ap=" << st.white_report.val_ap << " clean_ap=" << clean.ap << " patched_ap clean="
           << clean.patched_ap << " grey=" << grey.patched_ap << " trained=" << attacked.patched_ap
           << " success_rate trained=" << attacked.outcomes.success_rate() << " patch_training_s=" << st.train_seconds;
}

void criterion6(Verdict& v) {
  Stack& st = stack();
  const double white_clean = eval_with(*st.white_box, std::nullopt).patched_ap;
  const double white_attacked = eval_with(*st.white_box, st.trained).patched_ap;
  const double other_clean = eval_with(*st.second_seed, std::nullopt).patched_ap;
  const double other_attacked = eval_with(*st.second_seed, st.trained).patched_ap;
  const double white_drop = white_clean - white_attacked;
  const double transfer_drop = other_clean - other_attacked;
  v.require(white_drop > 0.0, "white-box reduction positive");
  v.require(transfer_drop >= 0.5 * white_drop, "transfer reduction >= 50% of white-box");
  v.detail << "seed2_val_ap=" << st.second_report.val_ap << " white_box_drop=" << white_drop
           << " transfer_drop=" << transfer_drop << " ratio=" << transfer_drop / white_drop;
}

// --- 7: ensemble algebra ---------------------------------------------------

void criterion7(Verdict& v) {
  SceneSpec spec;
  spec.seed = 21;
  spec.print_probability = 0.5;
  const SceneSource data(spec, 50000, 3);
  DetectorList dets;
  for (std::uint64_t s = 0; s < 3; ++s) {
    ToyDetectorConfig c;
    c.id = std::string("toy-") + char('a' + s);
    nn::ConvNet net(c.layers());
    net.initialize(40 + s);
    dets.push_back(std::make_shared<ToyDetector>(c, std::move(net)));
  }
  AttackConfig cfg;
  cfg.patch_height = 20;
  cfg.patch_width = 12;
  cfg.placement = PlacementSource::kGroundTruth;
  cfg.rule.rel_width = 0.6;
  Patch patch;
  patch.pixels = random_grid(20, 12, 8, 0.0, 1.0);
  const std::vector<std::size_t> batch{0, 1, 2};

  const PatchObjective single(cfg, {dets[0]}, data);
  const PatchObjective twice(cfg, {dets[0], dets[0]}, data);
  const double one = single.objectness(patch, batch, 0);
  const double two = twice.objectness(patch, batch, 0);
  v.require(one > 0.0, "non-zero loss");
  v.require(two == 2.0 * one, "duplicated detector gives exactly 2x");

  const ImageBuffer image = data.at(0).image;
  const ScoreMap m = dets[0]->score_map(image);
  const std::vector<ScoreMap> pair{m, m};
  v.require(ensemble_loss(pair) == 2.0 * objectness_loss(m), "ensemble_loss({A,A}) == 2 L(A)");

  std::vector<std::size_t> perm{0, 1, 2};
  double reference = 0.0;
  double reference_ensemble = 0.0;
  std::vector<double> reference_grad;
  int orders = 0;
  bool invariant = true;
  do {
    const DetectorList ordered{dets[perm[0]], dets[perm[1]], dets[perm[2]]};
    const PatchObjective obj(cfg, ordered, data);
    std::vector<double> grad;
    const double l = obj.objectness(patch, batch, 0, &grad);
    std::vector<ScoreMap> maps;
    for (const auto& d : ordered) maps.push_back(d->score_map(image));
    const double e = ensemble_loss(maps);
    if (orders == 0) {
      reference = l;
      reference_grad = grad;
      reference_ensemble = e;
    }
    invariant = invariant && l == reference && grad == reference_grad && e == reference_ensemble;
    ++orders;
  } while (std::next_permutation(perm.begin(), perm.end()));
  v.require(orders == 6 && invariant, "loss and gradient invariant over all 6 orders");
  v.detail << "L(A)=" << one << " L(A,A)=" << two << " three_detector_loss=" << reference;
}

// --- 8: reproducibility ----------------------------------------------------

void criterion8(Verdict& v) {
  Stack& st = stack();
  AttackConfig cfg = st.attack;
  cfg.epochs = 3;
  SceneSpec spec = st.scene;
  spec.seed = 21;
  const SceneSource data(spec, 0, 8);
  const DetectorList dets{st.white_box};
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / "cloak-acceptance";
  std::filesystem::create_directories(dir);
  std::vector<std::string> sums;
  for (int run = 0; run < 2; ++run) {
    const Patch p = train_patch(cfg, dets, data);
    const auto png = dir / ("run" + std::to_string(run) + ".png");
    save_patch(png, p);
    sums.push_back(sha256_file(png));
  }
  std::filesystem::remove_all(dir);
  v.require(sums[0] == sums[1], "identical PNG checksums");
  v.detail << "sha256=" << sums[0].substr(0, 16) << "... runs=2";
}

// --- 9: distortion ladder --------------------------------------------------

void criterion9(Verdict& v) {
  Stack& st = stack();
  EvalOptions o = st.eval;
  const std::vector<DistortionSpec> ladder{DistortionSpec::parse("jpeg:20"), DistortionSpec::parse("pixelate:4")};
  const DegradationReport rep = degradation_report(st.trained, *st.white_box, *st.test_images, ladder, o);
  const EvalResult plain = eval_with(*st.white_box, st.trained);
  v.require(rep.rows.size() == 3 && rep.rows[0].spec.is_identity(), "identity rung first");
  const DegradationRow& id = rep.rows[0];
  v.require(id.ap == plain.ap && id.patched_ap == plain.patched_ap && id.outcomes.success == plain.outcomes.success &&
                id.outcomes.partial == plain.outcomes.partial && id.outcomes.failure == plain.outcomes.failure,
            "identity rung == plain evaluation");
  const double s_id = id.outcomes.success_rate();
  const double s_jpeg = rep.rows[1].outcomes.success_rate();
  const double s_pix = rep.rows[2].outcomes.success_rate();
  v.require(s_jpeg < s_id, "jpeg:20 reduces success rate");
  v.require(s_pix < s_id, "pixelate:4 reduces success rate");
  v.detail << "success_rate identity=" << s_id << " jpeg:20=" << s_jpeg << " (" << s_jpeg - s_id
           << ") pixelate:4=" << s_pix << " (" << s_pix - s_id << ") patched_ap identity=" << id.patched_ap
           << " jpeg:20=" << rep.rows[1].patched_ap << " pixelate:4=" << rep.rows[2].patched_ap;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria{
      {"loss oracles", criterion1},        {"patch gradient vs finite differences", criterion2},
      {"metric oracles", criterion3},      {"renderer invariants", criterion4},
      {"attack strength ordering", criterion5}, {"cross-seed transfer", criterion6},
      {"ensemble algebra", criterion7},    {"bit-identical reruns", criterion8},
      {"distortion ladder", criterion9}};
  const auto start = Clock::now();
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    const auto t0 = Clock::now();
    try {
      criteria[i].second(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << " [exception: " << e.what() << "]";
    }
    const double secs = seconds_since(t0);
    if (i == 0 && secs >= 1.0) v.require(false, "runtime < 1 s");
    if (i == 1 && secs >= 120.0) v.require(false, "runtime < 2 min");
    std::printf("%s criterion %zu (%s): %s (%.1fs)\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                v.detail.str().c_str(), secs);
    std::fflush(stdout);
    failed += v.pass ? 0 : 1;
  }
  const double total = seconds_since(start);
  if (total >= 1800.0) {
    std::printf("FAIL total runtime %.0fs exceeds 30 min\n", total);
    ++failed;
  }
  std::printf("%d of %zu criteria passed in %.0fs\n", int(criteria.size()) - failed, criteria.size(), total);
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
