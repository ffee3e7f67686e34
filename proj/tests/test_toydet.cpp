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

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

#include <gtest/gtest.h>

#include "cloak/detectors.hpp"
#include "cloak/errors.hpp"
#include "cloak/metrics.hpp"
#include "cloak/rng.hpp"
#include "cloak/toydet.hpp"
#include "test_util.hpp"

namespace cloak {
namespace {

using testing::box;

TEST(SceneTest, DeterministicPerSeedAndIndex) {
  const SceneSpec spec = testing::print_scenes(3);
  const LabeledImage a = gen_scene(spec, 17);
  const LabeledImage b = gen_scene(spec, 17);
  EXPECT_EQ(a.image.pixels, b.image.pixels);
  EXPECT_EQ(a.boxes, b.boxes);
  EXPECT_EQ(a.image.source_id, b.image.source_id);
  EXPECT_NE(gen_scene(spec, 18).image.pixels, a.image.pixels);
  SceneSpec other = spec;
  other.seed = 4;
  EXPECT_NE(gen_scene(other, 17).image.pixels, a.image.pixels);
  const auto batch = gen_scenes(spec, 15, 4, 2);
  ASSERT_EQ(batch.size(), 4u);
  EXPECT_EQ(batch[2].image.pixels, a.image.pixels);
}

TEST(SceneTest, PersonCountHonored) {
  SceneSpec spec;
  spec.min_persons = 1;
  spec.max_persons = 1;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const LabeledImage s = gen_scene(spec, i);
    EXPECT_EQ(std::count_if(s.boxes.begin(), s.boxes.end(), [](const BBox& b) { return b.class_id == kPersonClass; }), 1);
  }
}

TEST(SceneTest, GeometrySweep) {
  SceneSpec spec;
  spec.seed = 11;
  spec.print_probability = 0.5;
  double lo = 1e9, hi = 0.0;
  std::size_t persons = 0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const LabeledImage s = gen_scene(spec, i);
    EXPECT_EQ(s.image.height(), 256);
    EXPECT_TRUE(in_unit_range(s.image.pixels));
    for (const BBox& b : s.boxes) {
      EXPECT_TRUE(b.valid());
      EXPECT_GE(b.x_min, 0.0);
      EXPECT_GE(b.y_min, 0.0);
      EXPECT_LE(b.x_max, 256.0);
      EXPECT_LE(b.y_max, 256.0);
      if (b.class_id != kPersonClass) {
        EXPECT_EQ(b.class_id, kDistractorClass);
        continue;
      }
      ++persons;
      EXPECT_GE(b.area(), 400.0);
      lo = std::min(lo, b.height());
      hi = std::max(hi, b.height());
    }
  }
  EXPECT_GE(persons, 1000u);
  EXPECT_GE(lo, 60.0 - 1e-9);
  EXPECT_LE(hi, 160.0 + 1e-9);
  EXPECT_LT(lo, 65.0);
  EXPECT_GT(hi, 155.0);
}

TEST(SceneTest, InvalidSpecsRejected) {
  SceneSpec s;
  s.height = 100;
  EXPECT_THROW(gen_scene(s, 0), ConfigError);
  s = SceneSpec{};
  s.max_persons = 0;
  s.min_persons = 1;
  EXPECT_THROW(s.validate(), ConfigError);
  s = SceneSpec{};
  s.print_probability = 1.5;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(AnchorTest, LayoutAndCount) {
  const ToyDetectorConfig cfg;
  const auto anchors = make_anchors(cfg);
  ASSERT_EQ(anchors.size(), 16u * 16u * 3u);
  EXPECT_DOUBLE_EQ(anchors[0].center_x(), 8.0);
  EXPECT_DOUBLE_EQ(anchors[0].center_y(), 8.0);
  EXPECT_DOUBLE_EQ(anchors[1].width(), cfg.anchors[1].width);
  EXPECT_DOUBLE_EQ(anchors[3].center_x(), 24.0);
  EXPECT_DOUBLE_EQ(anchors[16 * 3].center_y(), 24.0);
}

TEST(AnchorTest, EncodeDecodeRoundTrip) {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const double ax = rng.uniform(0, 200), ay = rng.uniform(0, 200);
    const BBox anchor = box(ax, ay, ax + rng.uniform(10, 60), ay + rng.uniform(20, 140));
    const std::array<double, 4> t{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    const auto back = encode_box(decode_box(t, anchor), anchor);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(back[k], t[k], 1e-6);
  }
}

TEST(ToyConfigTest, Validation) {
  ToyDetectorConfig c;
  EXPECT_NO_THROW(c.validate());
  c.stride = 8;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ToyDetectorConfig{};
  c.negative_iou = 0.7;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ToyDetectorConfig{};
  c.degrade_probability = -0.1;
  EXPECT_THROW(c.validate(), ConfigError);
}

ToyDetectorConfig tiny_config(std::uint64_t seed) {
  ToyDetectorConfig cfg;
  cfg.epochs = 1;
  cfg.ap_floor = 0.0;
  cfg.seed = seed;
  cfg.hidden_channels = 8;
  return cfg;
}

TEST(ToyTrainingTest, SeedReproducible) {
  const SceneSpec spec = testing::print_scenes();
  SceneSource train(spec, 0, 32);
  SceneSource val(spec, 100000, 8);
  ToyTrainReport ra, rb;
  const auto a = train_toy_detector(tiny_config(1), train, val, &ra);
  const auto b = train_toy_detector(tiny_config(1), train, val, &rb);
  EXPECT_EQ(ra.val_ap, rb.val_ap);
  EXPECT_EQ(ra.epoch_loss, rb.epoch_loss);
  const auto pa = a->network().parameters();
  const auto pb = b->network().parameters();
  EXPECT_TRUE(std::equal(pa.begin(), pa.end(), pb.begin(), pb.end()));
  const auto c = train_toy_detector(tiny_config(2), train, val);
  const auto pc = c->network().parameters();
  EXPECT_FALSE(std::equal(pa.begin(), pa.end(), pc.begin(), pc.end()));
}

TEST(ToyTrainingTest, FloorMissIsTrainingFailure) {
  const SceneSpec spec = testing::print_scenes();
  SceneSource train(spec, 0, 16);
  SceneSource val(spec, 100000, 8);
  ToyDetectorConfig cfg = tiny_config(1);
  cfg.ap_floor = 0.999;
  EXPECT_THROW(train_toy_detector(cfg, train, val), TrainingFailureError);
}

TEST(ToyTrainingTest, OverlappingSplitsRejected) {
  const SceneSpec spec = testing::print_scenes();
  SceneSource train(spec, 0, 16);
  SceneSource val(spec, 8, 8);
  EXPECT_THROW(train_toy_detector(tiny_config(1), train, val), DataError);
}

TEST(ToyPersistenceTest, SaveLoadAndRegistry) {
  const auto det = testing::quick_detector();
  testing::TempDir dir;
  det->save(dir / "quick.json");
  const auto loaded = ToyDetector::load(dir / "quick.json");
  const ImageBuffer img = gen_scene(testing::print_scenes(), 99).image;
  EXPECT_EQ(loaded->score_map(img).scores, det->score_map(img).scores);
  EXPECT_EQ(loaded->calibrated_threshold(), det->calibrated_threshold());
  EXPECT_EQ(loaded->id(), det->id());

  AdapterRegistry reg;
  register_toy_factory(reg);
  EXPECT_EQ(reg.resolve("toy:" + (dir / "quick.json").string())->score_map(img).scores,
            det->score_map(img).scores);
  setenv("CLOAK_CACHE", dir.path().c_str(), 1);
  EXPECT_EQ(reg.resolve("toy:quick")->score_map(img).scores, det->score_map(img).scores);
  unsetenv("CLOAK_CACHE");
  EXPECT_THROW(reg.resolve("toy:" + (dir / "absent.json").string()), MissingFileError);
  EXPECT_THROW(ToyDetector::load(dir / "absent.json"), MissingFileError);
}

// One fully trained detector; these checks are properties of training.
class TrainedToyTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ToyDetectorConfig cfg;
    cfg.epochs = 10;
    cfg.lr_decay_every = 6;
    cfg.degrade_probability = 0.5;
    const SceneSpec spec = testing::print_scenes();
    SceneSource train(spec, 0, 600);
    SceneSource val(spec, 100000, 150);
    det_ = train_toy_detector(cfg, train, val, &report_);
  }
  static void TearDownTestSuite() { det_.reset(); }

  static inline std::shared_ptr<ToyDetector> det_;
  static inline ToyTrainReport report_;
};

TEST_F(TrainedToyTest, ValidationApAboveFloorAndCalibratedAtZero) {
  EXPECT_GE(report_.val_ap, 0.80);
  EXPECT_EQ(det_->validation_ap(), report_.val_ap);
  ASSERT_TRUE(det_->calibrated_threshold());
  EXPECT_EQ(*det_->calibrated_threshold(), report_.threshold);
  EXPECT_NEAR(report_.threshold, 0.0, 1e-9);
  EXPECT_EQ(report_.epoch_loss.size(), 10u);
  EXPECT_LT(report_.epoch_loss.back(), report_.epoch_loss.front());
}

TEST_F(TrainedToyTest, HeldOutApMatchesValidationScale) {
  const EvalResult r = evaluate(*det_, SceneSource(testing::print_scenes(21), 50000, 100), EvalOptions{});
  EXPECT_GE(r.ap, 0.80);
}

TEST_F(TrainedToyTest, BlankImagesScoreBelowZero) {
  for (double v : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const ScoreMap m = det_->score_map(ImageBuffer{PixelGrid(256, 256, v), "blank"});
    EXPECT_LT(*std::max_element(m.scores.begin(), m.scores.end()), 0.0) << "level " << v;
  }
}

TEST_F(TrainedToyTest, BoldPersonFiresMatchingPrior) {
  SceneSpec spec;
  spec.seed = 5;
  spec.min_persons = spec.max_persons = 1;
  spec.max_distractors = 0;
  spec.min_person_height = 120.0;
  int checked = 0;
  for (std::uint64_t i = 0; i < 10; ++i) {
    const LabeledImage s = gen_scene(spec, i);
    const ScoreMap m = det_->score_map(s.image);
    const auto best = std::max_element(m.scores.begin(), m.scores.end()) - m.scores.begin();
    EXPECT_GT(m.scores[static_cast<std::size_t>(best)], 0.0);
    EXPECT_GT(iou(m.priors[static_cast<std::size_t>(best)], s.boxes.at(0)), 0.5) << "scene " << i;
    ++checked;
  }
  EXPECT_EQ(checked, 10);
}

TEST_F(TrainedToyTest, TopDetectionLocalizesSinglePersons) {
  SceneSpec spec = testing::print_scenes(9);
  spec.min_persons = spec.max_persons = 1;
  int hits = 0;
  const int n = 100;
  for (int i = 0; i < n; ++i) {
    const LabeledImage s = gen_scene(spec, 200000 + static_cast<std::uint64_t>(i));
    const auto dets = detect(*det_, s.image, -8.0, 0.45);
    const BBox* person = nullptr;
    for (const BBox& b : s.boxes) {
      if (b.class_id == kPersonClass) person = &b;
    }
    ASSERT_NE(person, nullptr);
    if (!dets.empty() && iou(dets.front(), *person) >= 0.5) ++hits;
  }
  EXPECT_GE(hits, 95);
}

}  // namespace
}  // namespace cloak
