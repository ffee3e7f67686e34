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

#include <fstream>

#include <gtest/gtest.h>

#include "cloak/config.hpp"
#include "cloak/errors.hpp"
#include "test_util.hpp"

namespace cloak {
namespace {

using nlohmann::json;

ToolConfig custom_config() {
  ToolConfig c;
  c.seed = 9;
  c.jobs = 2;
  c.scene.print_probability = 0.5;
  c.scene.max_persons = 2;
  c.detector.epochs = 4;
  c.detector.anchors = {{20.0, 50.0}, {40.0, 100.0}};
  c.attack.patch_height = 30;
  c.attack.patch_width = 20;
  c.attack.detectors = {"toy:a.json", "toy:b.json"};
  c.attack.detector_weights = {1.0, 2.0};
  c.attack.ranges.tps_enabled = false;
  c.attack.rule.rel_width = 0.6;
  c.attack.transform_scope = TransformScope::kPerImage;
  c.attack.placement = PlacementSource::kGroundTruth;
  c.attack.init = PatchInit::kGrey;
  c.eval.threshold = 0.25;
  c.eval.patched_only = true;
  return c;
}

TEST(ConfigTest, JsonRoundTrip) {
  const ToolConfig c = custom_config();
  const json j = to_json(c);
  const ToolConfig back = tool_config_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(back.attack.detectors, c.attack.detectors);
  EXPECT_EQ(back.attack.transform_scope, TransformScope::kPerImage);
  EXPECT_EQ(back.attack.placement, PlacementSource::kGroundTruth);
  EXPECT_EQ(back.detector.anchors.size(), 2u);
  ASSERT_TRUE(back.eval.threshold);
  EXPECT_EQ(*back.eval.threshold, 0.25);
  EXPECT_EQ(to_json(tool_config_from_json(to_json(ToolConfig{}))), to_json(ToolConfig{}));
}

TEST(ConfigTest, PartialConfigKeepsDefaults) {
  const ToolConfig c = tool_config_from_json(json::parse(R"({"attack": {"epochs": 7}})"));
  EXPECT_EQ(c.attack.epochs, 7);
  ToolConfig expected;
  expected.attack.epochs = 7;
  EXPECT_EQ(to_json(c), to_json(expected));
  const ToolConfig n = tool_config_from_json(json::parse(R"({"eval": {"threshold": null}})"), custom_config());
  EXPECT_FALSE(n.eval.threshold);
}

TEST(ConfigTest, UnknownKeysRejected) {
  for (const char* text :
       {R"({"sed": 1})", R"({"scene": {"persons": 2}})", R"({"detector": {"epoch": 2}})",
        R"({"attack": {"lr": 0.1}})", R"({"attack": {"ranges": {"hue": [0, 1]}}})",
        R"({"attack": {"rule": {"width": 0.5}}})", R"({"eval": {"iou": 0.5}})"}) {
    EXPECT_THROW(tool_config_from_json(json::parse(text)), ConfigError) << text;
  }
}

TEST(ConfigTest, WrongTypesRejected) {
  for (const char* text :
       {R"({"seed": "one"})", R"({"scene": 3})", R"({"attack": {"epochs": "ten"}})",
        R"({"attack": {"ranges": {"brightness": [0.1]}}})", R"({"attack": {"init": "zeros"}})",
        R"({"attack": {"placement": 1}})", R"({"detector": {"anchors": [[1]]}})",
        R"({"eval": {"threshold": "high"}})"}) {
    EXPECT_THROW(tool_config_from_json(json::parse(text)), ConfigError) << text;
  }
}

TEST(ConfigTest, InvalidValuesRejected) {
  for (const char* text :
       {R"({"jobs": 0})", R"({"attack": {"gamma": -1}})", R"({"attack": {"patch_height": 0}})",
        R"({"attack": {"ranges": {"brightness": [0.2, -0.2]}}})", R"({"scene": {"min_persons": 3, "max_persons": 1}})",
        R"({"detector": {"learning_rate": 0}})"}) {
    EXPECT_THROW(tool_config_from_json(json::parse(text)), ConfigError) << text;
  }
}

TEST(ConfigTest, HashIsCanonical) {
  const json a = json::parse(R"({"seed": 1, "jobs": 2})");
  const json b = json::parse(R"({"jobs": 2, "seed": 1})");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(json::parse(R"({"seed": 2, "jobs": 2})")));
  EXPECT_EQ(config_hash(a).size(), 64u);
  EXPECT_EQ(config_hash(to_json(custom_config())), config_hash(to_json(custom_config())));
}

TEST(ConfigTest, LoadFromFile) {
  testing::TempDir dir;
  std::ofstream(dir / "c.json") << to_json(custom_config()).dump(2);
  EXPECT_EQ(to_json(load_tool_config(dir / "c.json")), to_json(custom_config()));
  EXPECT_THROW(load_tool_config(dir / "none.json"), ConfigError);
  std::ofstream(dir / "bad.json") << "{ seed: 1 ";
  EXPECT_THROW(load_tool_config(dir / "bad.json"), ConfigError);
}

}  // namespace
}  // namespace cloak
