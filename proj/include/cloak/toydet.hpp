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

#ifndef CLOAK_TOYDET_HPP
#define CLOAK_TOYDET_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cloak/core.hpp"
#include "cloak/detectors.hpp"
#include "cloak/nn.hpp"
#include "cloak/source.hpp"

namespace cloak {

inline constexpr int kDistractorClass = 2;

/// Synthetic scene generator settings. Persons are stick figures (head disc,
/// torso block, arm and leg stripes) over a textured gradient, with
/// non-person shapes as distractors.
struct SceneSpec {
  int height = 256;
  int width = 256;
  int min_persons = 1;
  int max_persons = 3;
  double min_person_height = 60.0;
  double max_person_height = 160.0;
  int min_distractors = 0;
  int max_distractors = 4;
  /// Chance that a person wears a printed rectangle (solid, stripes, checker,
  /// block noise or gradient) over the torso, sized like a patch footprint.
  double print_probability = 0.0;
  /// Allow single-color prints.
  bool print_solid = true;
  double print_rel_width = 0.6;
  double print_anchor = 0.45;
  /// Print height over print width.
  double print_aspect = 250.0 / 150.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Deterministic in (spec.seed, index). Person boxes carry kPersonClass,
/// distractor boxes kDistractorClass.
LabeledImage gen_scene(const SceneSpec& spec, std::uint64_t index);

std::vector<LabeledImage> gen_scenes(const SceneSpec& spec, std::uint64_t first,
                                     std::size_t count, int jobs = 1);

/// Scenes [first, first + count) synthesized on demand.
class SceneSource final : public ImageSource {
 public:
  SceneSource(SceneSpec spec, std::uint64_t first, std::size_t count);
  std::size_t size() const override { return count_; }
  LabeledImage at(std::size_t index) const override;

 private:
  SceneSpec spec_;
  std::uint64_t first_;
  std::size_t count_;
};

struct AnchorShape {
  double width = 0.0;
  double height = 0.0;
};

struct ToyDetectorConfig {
  std::string id = "toy";
  int input_size = 256;
  int stride = 16;
  std::vector<AnchorShape> anchors{{28.0, 64.0}, {42.0, 96.0}, {62.0, 142.0}};
  int hidden_channels = 32;
  int epochs = 12;
  int batch_size = 8;
  double learning_rate = 2e-3;
  int lr_decay_every = 8;
  double lr_decay_factor = 0.3;
  double positive_iou = 0.5;
  double negative_iou = 0.3;
  double box_loss_weight = 1.0;
  /// Chance that a training image is blurred, JPEG-compressed or pixelated
  /// before the forward pass.
  double degrade_probability = 0.0;
  /// Validation AP below this raises TrainingFailureError.
  double ap_floor = 0.80;
  std::uint64_t seed = 1;
  int jobs = 1;

  /// Backbone with output stride 16 followed by the 1x1 prediction head.
  std::vector<nn::ConvSpec> layers() const;
  void validate() const;
};

/// Box regression targets relative to an anchor (center offsets scaled by
/// anchor size, log size ratios).
std::array<double, 4> encode_box(const BBox& box, const BBox& anchor);
BBox decode_box(const std::array<double, 4>& offsets, const BBox& anchor);

/// Anchors on the input grid, ordered (row, column, anchor).
std::vector<BBox> make_anchors(const ToyDetectorConfig& cfg);

/// Small one-stage anchor detector implementing the adapter contract. Its
/// scores are person-class logits.
class ToyDetector final : public DetectorAdapter {
 public:
  ToyDetector(ToyDetectorConfig cfg, nn::ConvNet net);

  const std::string& id() const override { return cfg_.id; }
  ScoreSemantics score_semantics() const override { return ScoreSemantics::kPersonClass; }
  InputConvention input_convention() const override;
  std::size_t prior_count(int height, int width) const override;
  ScoreMap score_map(const ImageBuffer& image) const override;
  ScoreMap score_map_vjp(const ImageBuffer& image, const ScoreGradFn& loss_grad,
                         std::vector<double>& image_grad) const override;
  std::vector<BBox> candidates(const ImageBuffer& image) const override;
  std::optional<double> calibrated_threshold() const override { return threshold_; }

  void set_calibrated_threshold(std::optional<double> t) { threshold_ = t; }
  void set_id(std::string id) { cfg_.id = std::move(id); }
  double validation_ap() const noexcept { return val_ap_; }
  void set_validation_ap(double ap) noexcept { val_ap_ = ap; }

  const ToyDetectorConfig& config() const noexcept { return cfg_; }
  const nn::ConvNet& network() const noexcept { return net_; }
  nn::ConvNet& network() noexcept { return net_; }

  /// Raw head output (5 channels per anchor) for a preprocessed input.
  nn::Tensor preprocess(const ImageBuffer& image) const;

  void save(const std::filesystem::path& path) const;
  static std::shared_ptr<ToyDetector> load(const std::filesystem::path& path);

 private:
  ScoreMap make_score_map(const nn::Tensor& head, int height, int width) const;

  ToyDetectorConfig cfg_;
  nn::ConvNet net_;
  std::vector<BBox> anchors_;
  std::optional<double> threshold_;
  double val_ap_ = 0.0;
};

struct ToyTrainReport {
  std::vector<double> epoch_loss;
  double val_ap = 0.0;
  double threshold = 0.0;
  /// Amount subtracted from the objectness bias after training.
  double logit_offset = 0.0;
};

/// Trains on `train`, validates on `val` (must not share source ids), tunes
/// the operating threshold on `val`. Throws TrainingFailureError when the
/// validation AP ends below cfg.ap_floor.
std::shared_ptr<ToyDetector> train_toy_detector(const ToyDetectorConfig& cfg,
                                                const ImageSource& train,
                                                const ImageSource& val,
                                                ToyTrainReport* report = nullptr);

/// Registers the "toy" prefix: "toy:<path>" loads a weights file, and a bare
/// name is looked up as $CLOAK_CACHE/<name>.json.
void register_toy_factory(AdapterRegistry& registry);

}  // namespace cloak

#endif  // CLOAK_TOYDET_HPP
