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

#include "cloak/config.hpp"

#include <fstream>
#include <set>

#include "cloak/errors.hpp"
#include "cloak/image_io.hpp"

namespace cloak {

namespace {

using nlohmann::json;

class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& field) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      field = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type");
    }
  }

  void range(const std::string& key, Range& r) {
    std::vector<double> v{r.lo, r.hi};
    get(key, v);
    if (v.size() != 2) throw ConfigError(where_ + "." + key + ": expected [lo, hi]");
    r = {v[0], v[1]};
  }

  template <typename E>
  void choice(const std::string& key, E& field, std::initializer_list<std::pair<const char*, E>> names) {
    std::string s;
    for (const auto& [name, value] : names) {
      if (value == field) s = name;
    }
    get(key, s);
    for (const auto& [name, value] : names) {
      if (s == name) {
        field = value;
        return;
      }
    }
    throw ConfigError(where_ + "." + key + ": unknown value '" + s + "'");
  }

  const json* sub(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const std::string& where() const { return where_; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.contains(item.key())) throw ConfigError("unknown config key " + where_ + "." + item.key());
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

constexpr std::pair<const char*, PlacementSource> kPlacementNames[] = {
    {"detections", PlacementSource::kDetections}, {"ground_truth", PlacementSource::kGroundTruth}};
constexpr std::pair<const char*, TransformScope> kScopeNames[] = {
    {"per_box", TransformScope::kPerBox}, {"per_image", TransformScope::kPerImage}};
constexpr std::pair<const char*, PatchInit> kInitNames[] = {{"random", PatchInit::kRandom},
                                                            {"grey", PatchInit::kGrey}};

template <typename E, std::size_t N>
const char* name_of(const std::pair<const char*, E> (&names)[N], E value) {
  for (const auto& [n, v] : names) {
    if (v == value) return n;
  }
  return "";
}

}  // namespace

json to_json(const AugmentationRanges& r) {
  return {{"brightness", range_json(r.brightness)},
          {"contrast", range_json(r.contrast)},
          {"rotation_deg", range_json(r.rotation_deg)},
          {"translate_frac", range_json(r.translate_frac)},
          {"shear_deg", range_json(r.shear_deg)},
          {"scale_jitter", range_json(r.scale_jitter)},
          {"tps_enabled", r.tps_enabled},
          {"tps_rows", r.tps_rows},
          {"tps_cols", r.tps_cols},
          {"tps_max_offset", r.tps_max_offset}};
}

json to_json(const PlacementRule& r) {
  return {{"rel_width", r.rel_width}, {"vertical_anchor", r.vertical_anchor}, {"aspect_locked", r.aspect_locked}};
}

json to_json(const SceneSpec& s) {
  return {{"height", s.height},
          {"width", s.width},
          {"min_persons", s.min_persons},
          {"max_persons", s.max_persons},
          {"min_person_height", s.min_person_height},
          {"max_person_height", s.max_person_height},
          {"min_distractors", s.min_distractors},
          {"max_distractors", s.max_distractors},
          {"print_probability", s.print_probability},
          {"print_solid", s.print_solid},
          {"print_rel_width", s.print_rel_width},
          {"print_anchor", s.print_anchor},
          {"print_aspect", s.print_aspect},
          {"seed", s.seed}};
}

json to_json(const ToyDetectorConfig& c) {
  json anchors = json::array();
  for (const AnchorShape& a : c.anchors) anchors.push_back({a.width, a.height});
  return {{"id", c.id},
          {"input_size", c.input_size},
          {"stride", c.stride},
          {"anchors", anchors},
          {"hidden_channels", c.hidden_channels},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"lr_decay_every", c.lr_decay_every},
          {"lr_decay_factor", c.lr_decay_factor},
          {"positive_iou", c.positive_iou},
          {"negative_iou", c.negative_iou},
          {"box_loss_weight", c.box_loss_weight},
          {"degrade_probability", c.degrade_probability},
          {"ap_floor", c.ap_floor},
          {"seed", c.seed}};
}

json to_json(const AttackConfig& c) {
  return {{"patch_height", c.patch_height},
          {"patch_width", c.patch_width},
          {"detectors", c.detectors},
          {"detector_weights", c.detector_weights},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"lr_decay_every", c.lr_decay_every},
          {"lr_decay_factor", c.lr_decay_factor},
          {"gamma", c.gamma},
          {"obj_scale", c.obj_scale},
          {"ranges", to_json(c.ranges)},
          {"rule", to_json(c.rule)},
          {"edge_blend", c.render.edge_blend},
          {"noise_amplitude", c.render.noise_amplitude},
          {"transform_scope", name_of(kScopeNames, c.transform_scope)},
          {"placement", name_of(kPlacementNames, c.placement)},
          {"placement_threshold", c.placement_threshold},
          {"placement_nms", c.placement_nms},
          {"init", name_of(kInitNames, c.init)},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every}};
}

json to_json(const ToolConfig& c) {
  json eval = {{"candidate_floor", c.eval.candidate_floor},
               {"nms_iou", c.eval.nms_iou},
               {"patched_only", c.eval.patched_only}};
  eval["threshold"] = c.eval.threshold ? json(*c.eval.threshold) : json(nullptr);
  return {{"seed", c.seed},
          {"jobs", c.jobs},
          {"scene", to_json(c.scene)},
          {"detector", to_json(c.detector)},
          {"attack", to_json(c.attack)},
          {"eval", eval}};
}

AugmentationRanges ranges_from_json(const json& j, AugmentationRanges r) {
  Reader in(j, "ranges");
  in.range("brightness", r.brightness);
  in.range("contrast", r.contrast);
  in.range("rotation_deg", r.rotation_deg);
  in.range("translate_frac", r.translate_frac);
  in.range("shear_deg", r.shear_deg);
  in.range("scale_jitter", r.scale_jitter);
  in.get("tps_enabled", r.tps_enabled);
  in.get("tps_rows", r.tps_rows);
  in.get("tps_cols", r.tps_cols);
  in.get("tps_max_offset", r.tps_max_offset);
  in.finish();
  r.validate();
  return r;
}

PlacementRule rule_from_json(const json& j, PlacementRule r) {
  Reader in(j, "rule");
  in.get("rel_width", r.rel_width);
  in.get("vertical_anchor", r.vertical_anchor);
  in.get("aspect_locked", r.aspect_locked);
  in.finish();
  r.validate();
  return r;
}

SceneSpec scene_from_json(const json& j, SceneSpec s) {
  Reader in(j, "scene");
  in.get("height", s.height);
  in.get("width", s.width);
  in.get("min_persons", s.min_persons);
  in.get("max_persons", s.max_persons);
  in.get("min_person_height", s.min_person_height);
  in.get("max_person_height", s.max_person_height);
  in.get("min_distractors", s.min_distractors);
  in.get("max_distractors", s.max_distractors);
  in.get("print_probability", s.print_probability);
  in.get("print_solid", s.print_solid);
  in.get("print_rel_width", s.print_rel_width);
  in.get("print_anchor", s.print_anchor);
  in.get("print_aspect", s.print_aspect);
  in.get("seed", s.seed);
  in.finish();
  s.validate();
  return s;
}

ToyDetectorConfig detector_from_json(const json& j, ToyDetectorConfig c) {
  Reader in(j, "detector");
  in.get("id", c.id);
  in.get("input_size", c.input_size);
  in.get("stride", c.stride);
  if (const json* a = in.sub("anchors")) {
    try {
      c.anchors.clear();
      for (const auto& pair : *a) c.anchors.push_back({pair.at(0).get<double>(), pair.at(1).get<double>()});
    } catch (const json::exception&) {
      throw ConfigError("detector.anchors: expected [[width, height], ...]");
    }
  }
  in.get("hidden_channels", c.hidden_channels);
  in.get("epochs", c.epochs);
  in.get("batch_size", c.batch_size);
  in.get("learning_rate", c.learning_rate);
  in.get("lr_decay_every", c.lr_decay_every);
  in.get("lr_decay_factor", c.lr_decay_factor);
  in.get("positive_iou", c.positive_iou);
  in.get("negative_iou", c.negative_iou);
  in.get("box_loss_weight", c.box_loss_weight);
  in.get("degrade_probability", c.degrade_probability);
  in.get("ap_floor", c.ap_floor);
  in.get("seed", c.seed);
  in.finish();
  c.validate();
  return c;
}

AttackConfig attack_from_json(const json& j, AttackConfig c) {
  Reader in(j, "attack");
  in.get("patch_height", c.patch_height);
  in.get("patch_width", c.patch_width);
  in.get("detectors", c.detectors);
  in.get("detector_weights", c.detector_weights);
  in.get("epochs", c.epochs);
  in.get("batch_size", c.batch_size);
  in.get("learning_rate", c.learning_rate);
  in.get("lr_decay_every", c.lr_decay_every);
  in.get("lr_decay_factor", c.lr_decay_factor);
  in.get("gamma", c.gamma);
  in.get("obj_scale", c.obj_scale);
  if (const json* r = in.sub("ranges")) c.ranges = ranges_from_json(*r, c.ranges);
  if (const json* r = in.sub("rule")) c.rule = rule_from_json(*r, c.rule);
  in.get("edge_blend", c.render.edge_blend);
  in.get("noise_amplitude", c.render.noise_amplitude);
  in.choice("transform_scope", c.transform_scope,
            {{"per_box", TransformScope::kPerBox}, {"per_image", TransformScope::kPerImage}});
  in.choice("placement", c.placement,
            {{"detections", PlacementSource::kDetections}, {"ground_truth", PlacementSource::kGroundTruth}});
  in.get("placement_threshold", c.placement_threshold);
  in.get("placement_nms", c.placement_nms);
  in.choice("init", c.init, {{"random", PatchInit::kRandom}, {"grey", PatchInit::kGrey}});
  in.get("seed", c.seed);
  in.get("checkpoint_every", c.checkpoint_every);
  in.finish();
  c.validate();
  return c;
}

ToolConfig tool_config_from_json(const json& j, ToolConfig c) {
  Reader in(j, "config");
  in.get("seed", c.seed);
  in.get("jobs", c.jobs);
  if (const json* s = in.sub("scene")) c.scene = scene_from_json(*s, c.scene);
  if (const json* d = in.sub("detector")) c.detector = detector_from_json(*d, c.detector);
  if (const json* a = in.sub("attack")) c.attack = attack_from_json(*a, c.attack);
  if (const json* e = in.sub("eval")) {
    Reader ev(*e, "eval");
    std::optional<double> threshold = c.eval.threshold;
    if (const json* t = ev.sub("threshold"); t != nullptr) {
      if (t->is_null()) {
        threshold.reset();
      } else if (t->is_number()) {
        threshold = t->get<double>();
      } else {
        throw ConfigError("eval.threshold: expected a number or null");
      }
    }
    c.eval.threshold = threshold;
    ev.get("candidate_floor", c.eval.candidate_floor);
    ev.get("nms_iou", c.eval.nms_iou);
    ev.get("patched_only", c.eval.patched_only);
    ev.finish();
  }
  in.finish();
  if (c.jobs < 1) throw ConfigError("jobs must be at least 1");
  return c;
}

ToolConfig load_tool_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return tool_config_from_json(j);
}

std::string config_hash(const json& j) { return sha256_hex(j.dump()); }

}  // namespace cloak
