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

#ifndef CLOAK_CONFIG_HPP
#define CLOAK_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "cloak/renderer.hpp"
#include "cloak/toydet.hpp"
#include "cloak/trainer.hpp"

namespace cloak {

struct EvalSettings {
  std::optional<double> threshold;
  double candidate_floor = -8.0;
  double nms_iou = 0.45;
  bool patched_only = false;
};

/// Everything a command can be configured with. Keys missing from the file
/// keep their defaults; unknown keys are rejected.
struct ToolConfig {
  std::uint64_t seed = 0;
  int jobs = 1;
  SceneSpec scene;
  ToyDetectorConfig detector;
  AttackConfig attack;
  EvalSettings eval;
};

nlohmann::json to_json(const AugmentationRanges& r);
nlohmann::json to_json(const PlacementRule& r);
nlohmann::json to_json(const SceneSpec& s);
nlohmann::json to_json(const ToyDetectorConfig& c);
nlohmann::json to_json(const AttackConfig& c);
nlohmann::json to_json(const ToolConfig& c);

/// Overlay `j` onto `base`. Throws ConfigError on unknown keys or wrong types.
AugmentationRanges ranges_from_json(const nlohmann::json& j, AugmentationRanges base = {});
PlacementRule rule_from_json(const nlohmann::json& j, PlacementRule base = {});
SceneSpec scene_from_json(const nlohmann::json& j, SceneSpec base = {});
ToyDetectorConfig detector_from_json(const nlohmann::json& j, ToyDetectorConfig base = {});
AttackConfig attack_from_json(const nlohmann::json& j, AttackConfig base = {});
ToolConfig tool_config_from_json(const nlohmann::json& j, ToolConfig base = {});

ToolConfig load_tool_config(const std::filesystem::path& path);

/// SHA-256 of the canonical (sorted-key, compact) JSON text.
std::string config_hash(const nlohmann::json& j);

}  // namespace cloak

#endif  // CLOAK_CONFIG_HPP
