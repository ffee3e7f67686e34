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

#include "cloak/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "cloak/errors.hpp"
#include "cloak/image_io.hpp"
#include "cloak/optim.hpp"
#include "cloak/parallel.hpp"
#include "cloak/resample.hpp"
#include "cloak/rng.hpp"

namespace cloak {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ull;
constexpr std::uint64_t kInitStream = 0x494e4954ull;
constexpr std::uint64_t kHeldOutEpoch = 0;

std::string epoch_tag(int epoch) {
  std::string s = std::to_string(epoch);
  return std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

void write_log(std::ostream* log, const EpochRecord& r) {
  if (log == nullptr) return;
  nlohmann::json j;
  j["epoch"] = r.epoch;
  j["lr"] = r.learning_rate;
  j["obj_loss"] = r.loss.obj_loss;
  j["tv_loss"] = r.loss.tv_loss;
  j["total"] = r.loss.total;
  j["per_detector"] = r.loss.per_detector;
  j["seconds"] = r.seconds;
  *log << j.dump() << '\n';
  log->flush();
}

// Maps optimizer parameters onto patch pixels and patch gradients back.
struct Parameterization {
  std::size_t size = 0;
  int height = 0;
  int width = 0;
  bool uniform = false;

  void expand(std::span<const double> params, Patch& patch) const {
    auto v = patch.pixels.values();
    if (!uniform) {
      std::copy(params.begin(), params.end(), v.begin());
      return;
    }
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = params[i % 3];
  }

  void reduce(std::span<const double> patch_grad, std::span<double> grad) const {
    if (!uniform) {
      std::copy(patch_grad.begin(), patch_grad.end(), grad.begin());
      return;
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < patch_grad.size(); ++i) grad[i % 3] += patch_grad[i];
  }
};

struct LoopState {
  std::vector<double> params;
  Adam adam;
  int next_epoch = 0;
};

struct LoopHooks {
  const TrainOptions* options = nullptr;
  TrainHistory* history = nullptr;
  std::function<void(int epoch, std::span<const double> params)> after_epoch;
};

void run_epochs(const AttackConfig& cfg, const PatchObjective& objective,
                const Parameterization& param, LoopState& state, const LoopHooks& hooks) {
  const std::size_t n = objective.size();
  Patch patch(param.height, param.width);
  std::vector<double> patch_grad;
  std::vector<double> grad(param.size);
  std::string last_checkpoint;
  std::vector<std::size_t> order(n);

  for (int epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = step_decay(cfg.learning_rate, epoch, cfg.lr_decay_every, cfg.lr_decay_factor);
    state.adam.set_learning_rate(lr);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, {kShuffleStream, static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double obj_sum = 0.0;
    double tv_sum = 0.0;
    std::map<std::string, double> per_det_sum;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      param.expand(state.params, patch);
      std::map<std::string, double> per_det;
      const double obj = objective.objectness(patch, batch, static_cast<std::uint64_t>(epoch),
                                              &patch_grad, &per_det);
      const double tv = tv_penalty(patch.pixels);
      if (cfg.gamma > 0.0) tv_gradient(patch.pixels, patch_grad, cfg.gamma);
      const double total = obj + cfg.gamma * tv;
      param.reduce(patch_grad, grad);
      const bool finite = std::isfinite(total) &&
                          std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); });
      if (!finite) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch), last_checkpoint);
      }
      state.adam.step(state.params, grad);
      for (double& p : state.params) p = std::clamp(p, 0.0, 1.0);
      const double share = static_cast<double>(batch.size());
      obj_sum += obj * share;
      tv_sum += tv * share;
      for (const auto& [id, v] : per_det) per_det_sum[id] += v * share;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    rec.loss.gamma = cfg.gamma;
    rec.loss.obj_loss = obj_sum / static_cast<double>(n);
    rec.loss.tv_loss = tv_sum / static_cast<double>(n);
    rec.loss.total = rec.loss.obj_loss + cfg.gamma * rec.loss.tv_loss;
    for (auto& [id, v] : per_det_sum) rec.loss.per_detector[id] = v / static_cast<double>(n);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    state.next_epoch = epoch + 1;

    const TrainOptions* opt = hooks.options;
    if (opt != nullptr && cfg.checkpoint_every > 0 && !opt->checkpoint_dir.empty() &&
        state.next_epoch % cfg.checkpoint_every == 0) {
      std::filesystem::create_directories(opt->checkpoint_dir);
      const std::string tag = epoch_tag(state.next_epoch);
      TrainCheckpoint ckpt;
      ckpt.next_epoch = state.next_epoch;
      ckpt.params = state.params;
      ckpt.adam_m.assign(state.adam.first_moment().begin(), state.adam.first_moment().end());
      ckpt.adam_v.assign(state.adam.second_moment().begin(), state.adam.second_moment().end());
      ckpt.adam_t = state.adam.steps();
      ckpt.config_hash = opt->config_hash;
      const auto state_path = opt->checkpoint_dir / ("checkpoint_" + tag + ".json");
      ckpt.save(state_path);
      param.expand(state.params, patch);
      const auto png_path = opt->checkpoint_dir / ("patch_" + tag + ".png");
      write_png(png_path, patch.pixels);
      if (hooks.history != nullptr) {
        hooks.history->checkpoints.emplace_back(state.next_epoch, sha256_file(png_path));
      }
      last_checkpoint = state_path.string();
    }
    if (hooks.history != nullptr) hooks.history->epochs.push_back(rec);
    if (opt != nullptr) {
      write_log(opt->log, rec);
      if (opt->on_epoch) opt->on_epoch(rec);
    }
    if (hooks.after_epoch) hooks.after_epoch(epoch, state.params);
  }
}

std::vector<std::shared_ptr<const DetectorAdapter>> to_vector(
    std::span<const std::shared_ptr<const DetectorAdapter>> detectors) {
  return {detectors.begin(), detectors.end()};
}

}  // namespace

void AttackConfig::validate() const {
  if (patch_height < 1 || patch_width < 1) throw ConfigError("patch dimensions must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be positive");
  }
  if (lr_decay_every < 1) throw ConfigError("lr_decay_every must be at least 1");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
    throw ConfigError("lr_decay_factor must be in (0,1]");
  }
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be non-negative");
  if (!(obj_scale > 0.0) || !std::isfinite(obj_scale)) throw ConfigError("obj_scale must be positive");
  if (!detector_weights.empty() && !detectors.empty() &&
      detector_weights.size() != detectors.size()) {
    throw ConfigError("one weight per detector required");
  }
  for (double w : detector_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("detector weights must be non-negative");
  }
  ranges.validate();
  rule.validate();
  if (!(render.noise_amplitude >= 0.0)) throw ConfigError("noise_amplitude must be non-negative");
  if (!(placement_nms > 0.0 && placement_nms <= 1.0)) {
    throw ConfigError("placement_nms must be in (0,1]");
  }
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
}

PatchObjective::PatchObjective(const AttackConfig& cfg,
                               std::vector<std::shared_ptr<const DetectorAdapter>> detectors,
                               const ImageSource& data)
    : cfg_(cfg), data_(data) {
  cfg.validate();
  if (detectors.empty()) throw ConfigError("at least one detector is required");
  if (!cfg.detector_weights.empty() && cfg.detector_weights.size() != detectors.size()) {
    throw ConfigError("one weight per detector required");
  }
  for (const auto& d : detectors) {
    if (!d) throw ConfigError("null detector");
  }
  const std::shared_ptr<const DetectorAdapter> placer = detectors.front();

  std::vector<std::size_t> idx(detectors.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return detectors[a]->id() < detectors[b]->id();
  });
  for (std::size_t i : idx) {
    detectors_.push_back(detectors[i]);
    weights_.push_back(cfg.detector_weights.empty() ? 1.0 : cfg.detector_weights[i]);
  }

  placements_.resize(data.size());
  parallel_for(data.size(), cfg.jobs, [&](std::size_t i) {
    const LabeledImage item = data.at(i);
    std::vector<BBox> boxes;
    if (cfg.placement == PlacementSource::kGroundTruth) {
      for (const BBox& b : item.boxes) {
        if (b.class_id == kPersonClass) boxes.push_back(b);
      }
    } else {
      boxes = detect(*placer, item.image, cfg.placement_threshold, cfg.placement_nms);
    }
    std::erase_if(boxes, [](const BBox& b) { return !b.valid(); });
    placements_[i] = std::move(boxes);
  });
}

std::size_t PatchObjective::box_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : placements_) n += p.size();
  return n;
}

std::vector<RenderParams> PatchObjective::transforms(std::size_t image, std::uint64_t epoch) const {
  const std::size_t boxes = placements_.at(image).size();
  std::vector<RenderParams> out;
  out.reserve(boxes);
  for (std::size_t b = 0; b < boxes; ++b) {
    const std::uint64_t s = cfg_.transform_scope == TransformScope::kPerBox
                                ? derive_seed(cfg_.seed, {epoch, image, b})
                                : derive_seed(cfg_.seed, {epoch, image});
    out.push_back(sample_params(s, cfg_.ranges));
  }
  return out;
}

double PatchObjective::objectness(const Patch& patch, std::span<const std::size_t> batch,
                                  std::uint64_t epoch, std::vector<double>* grad,
                                  std::map<std::string, double>* per_detector) const {
  if (patch.height() != cfg_.patch_height || patch.width() != cfg_.patch_width) {
    throw ConfigError("patch size does not match the attack config");
  }
  if (grad != nullptr) grad->assign(patch.pixels.size(), 0.0);
  if (batch.empty()) return 0.0;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  struct Item {
    double loss = 0.0;
    std::vector<double> per_det;
    std::vector<double> grad;
  };
  std::vector<Item> items(batch.size());
  parallel_for(batch.size(), cfg_.jobs, [&](std::size_t k) {
    const std::size_t image = batch[k];
    const LabeledImage item = data_.at(image);
    const std::vector<BBox>& boxes = placements_.at(image);
    const std::vector<RenderParams> params = transforms(image, epoch);
    RenderTrace trace;
    const ImageBuffer rendered = render(item.image, patch, boxes, params, cfg_.rule, cfg_.render,
                                        grad != nullptr ? &trace : nullptr);
    std::vector<ScoreMap> maps;
    maps.reserve(detectors_.size());
    std::vector<double> image_grad;
    std::vector<double> image_grad_sum;
    for (std::size_t j = 0; j < detectors_.size(); ++j) {
      if (grad == nullptr) {
        maps.push_back(detectors_[j]->score_map(rendered));
        continue;
      }
      const double scale = cfg_.obj_scale * weights_[j] * inv_b;
      maps.push_back(detectors_[j]->score_map_vjp(
          rendered, [scale](const ScoreMap& m) { return objectness_gradient(m.scores, scale); },
          image_grad));
      if (image_grad_sum.empty()) {
        image_grad_sum = image_grad;
      } else {
        for (std::size_t i = 0; i < image_grad_sum.size(); ++i) image_grad_sum[i] += image_grad[i];
      }
    }
    Item& out = items[k];
    out.loss = cfg_.obj_scale * ensemble_loss(maps, weights_);
    for (const ScoreMap& m : maps) out.per_det.push_back(objectness_loss(m));
    if (grad != nullptr) {
      out.grad.assign(patch.pixels.size(), 0.0);
      render_backward(trace, image_grad_sum, out.grad);
    }
  });

  double loss = 0.0;
  for (std::size_t k = 0; k < items.size(); ++k) {
    loss += items[k].loss;
    if (per_detector != nullptr) {
      for (std::size_t j = 0; j < detectors_.size(); ++j) {
        (*per_detector)[detectors_[j]->id()] += items[k].per_det[j] * inv_b;
      }
    }
    if (grad != nullptr) {
      for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] += items[k].grad[i];
    }
  }
  return loss * inv_b;
}

LossReport PatchObjective::loss(const Patch& patch, std::uint64_t epoch) const {
  std::vector<std::size_t> all(size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  LossReport r;
  r.gamma = cfg_.gamma;
  r.obj_loss = objectness(patch, all, epoch, nullptr, &r.per_detector);
  r.tv_loss = tv_penalty(patch.pixels);
  r.total = r.obj_loss + cfg_.gamma * r.tv_loss;
  return r;
}

void TrainCheckpoint::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "cloak-patch-checkpoint-v1";
  j["next_epoch"] = next_epoch;
  j["params"] = params;
  j["adam_m"] = adam_m;
  j["adam_v"] = adam_v;
  j["adam_t"] = adam_t;
  j["config_hash"] = config_hash;
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out << j.dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

TrainCheckpoint TrainCheckpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("checkpoint not found: " + path.string());
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    if (j.at("format") != "cloak-patch-checkpoint-v1") throw DataError("unknown checkpoint format");
    TrainCheckpoint c;
    c.next_epoch = j.at("next_epoch").get<int>();
    c.params = j.at("params").get<std::vector<double>>();
    c.adam_m = j.at("adam_m").get<std::vector<double>>();
    c.adam_v = j.at("adam_v").get<std::vector<double>>();
    c.adam_t = j.at("adam_t").get<std::uint64_t>();
    c.config_hash = j.value("config_hash", "");
    if (c.adam_m.size() != c.params.size() || c.adam_v.size() != c.params.size()) {
      throw DataError("checkpoint moment sizes disagree");
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

Patch initial_patch(const AttackConfig& cfg) {
  if (cfg.init == PatchInit::kGrey) return make_grey_patch(cfg.patch_height, cfg.patch_width);
  return make_random_patch(cfg.patch_height, cfg.patch_width, derive_seed(cfg.seed, {kInitStream}));
}

Patch train_patch(const AttackConfig& cfg,
                  std::span<const std::shared_ptr<const DetectorAdapter>> detectors,
                  const ImageSource& data, const TrainOptions& options, TrainHistory* history) {
  cfg.validate();
  PatchObjective objective(cfg, to_vector(detectors), data);
  if (objective.box_count() == 0) {
    throw DataError("no person found in any training image; nothing to place the patch on");
  }
  Parameterization param;
  param.height = cfg.patch_height;
  param.width = cfg.patch_width;
  param.size = static_cast<std::size_t>(cfg.patch_height) * cfg.patch_width * 3;

  LoopState state{{}, Adam(param.size, cfg.learning_rate), 0};
  if (options.resume) {
    const TrainCheckpoint& c = *options.resume;
    if (c.params.size() != param.size) throw ConfigError("checkpoint does not match the patch size");
    if (!c.config_hash.empty() && !options.config_hash.empty() && c.config_hash != options.config_hash) {
      throw ConfigError("checkpoint was written for a different config");
    }
    state.params = c.params;
    state.adam.restore(c.adam_m, c.adam_v, c.adam_t);
    state.next_epoch = c.next_epoch;
  } else {
    const Patch init = options.init ? *options.init : initial_patch(cfg);
    if (init.height() != cfg.patch_height || init.width() != cfg.patch_width) {
      throw ConfigError("initial patch does not match the configured size");
    }
    state.params.assign(init.pixels.values().begin(), init.pixels.values().end());
    for (double& p : state.params) p = std::clamp(p, 0.0, 1.0);
  }

  LoopHooks hooks;
  hooks.options = &options;
  hooks.history = history;
  run_epochs(cfg, objective, param, state, hooks);

  Patch out(cfg.patch_height, cfg.patch_width);
  param.expand(state.params, out);
  out.meta.seed = cfg.seed;
  out.meta.config_hash = options.config_hash;
  out.meta.created_at = utc_timestamp();
  return out;
}

Patch make_grey_patch(int height, int width, double value) {
  if (!(value >= 0.0 && value <= 1.0)) throw ConfigError("grey value must be in [0,1]");
  return Patch(height, width, value);
}

Patch make_random_patch(int height, int width, std::uint64_t seed) {
  Patch p(height, width);
  Rng rng(seed);
  for (double& v : p.pixels.values()) v = rng.uniform();
  p.meta.seed = seed;
  return p;
}

Patch make_flipped_patch(const Patch& patch) {
  Patch out(patch.height(), patch.width());
  out.meta = patch.meta;
  const int h = patch.height();
  const int w = patch.width();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) out.pixels.at(h - 1 - y, w - 1 - x, c) = patch.pixels.at(y, x, c);
    }
  }
  return out;
}

Patch make_crop_patch(const ImageBuffer& image, const BBox& region, int height, int width) {
  if (!region.valid()) throw GeometryError("crop region is empty");
  if (region.x_min < 0.0 || region.y_min < 0.0 || region.x_max > image.width() ||
      region.y_max > image.height()) {
    throw GeometryError("crop region extends beyond the image");
  }
  Patch out(height, width);
  const double sx = region.width() / width;
  const double sy = region.height() / height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const BilinearTaps t = bilinear_taps(region.x_min + (x + 0.5) * sx,
                                           region.y_min + (y + 0.5) * sy, image.height(),
                                           image.width());
      for (int c = 0; c < 3; ++c) out.pixels.at(y, x, c) = t.sample(image.pixels, c);
    }
  }
  out.meta.created_at = utc_timestamp();
  return out;
}

RgbResult optimize_rgb(const AttackConfig& cfg,
                       std::span<const std::shared_ptr<const DetectorAdapter>> detectors,
                       const ImageSource& train, const ImageSource& held_out, std::ostream* log) {
  cfg.validate();
  PatchObjective train_obj(cfg, to_vector(detectors), train);
  PatchObjective held_obj(cfg, to_vector(detectors), held_out);
  if (train_obj.box_count() == 0) {
    throw DataError("no person found in any training image; nothing to place the patch on");
  }
  Parameterization param;
  param.height = cfg.patch_height;
  param.width = cfg.patch_width;
  param.size = 3;
  param.uniform = true;

  RgbResult best;
  best.patch = make_grey_patch(cfg.patch_height, cfg.patch_width);
  best.grey_loss = held_obj.loss(best.patch, kHeldOutEpoch).total;
  best.loss = best.grey_loss;
  best.best_epoch = -1;

  LoopState state{{0.5, 0.5, 0.5}, Adam(3, cfg.learning_rate), 0};
  TrainOptions options;
  options.log = log;
  LoopHooks hooks;
  hooks.options = &options;
  hooks.after_epoch = [&](int epoch, std::span<const double> params) {
    Patch candidate(cfg.patch_height, cfg.patch_width);
    param.expand(params, candidate);
    const double l = held_obj.loss(candidate, kHeldOutEpoch).total;
    if (l < best.loss) {
      best.loss = l;
      best.best_epoch = epoch;
      best.rgb = {params[0], params[1], params[2]};
      best.patch = std::move(candidate);
    }
  };
  run_epochs(cfg, train_obj, param, state, hooks);
  best.patch.meta.seed = cfg.seed;
  best.patch.meta.created_at = utc_timestamp();
  return best;
}

}  // namespace cloak
