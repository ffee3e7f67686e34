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

// Command-line front end. Every command writes <out>/manifest.json.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cloak/config.hpp"
#include "cloak/data.hpp"
#include "cloak/distortion.hpp"
#include "cloak/errors.hpp"
#include "cloak/image_io.hpp"
#include "cloak/metrics.hpp"
#include "cloak/rng.hpp"
#include "cloak/toydet.hpp"
#include "cloak/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cloak;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string out = "out";
};

struct Run {
  ToolConfig cfg;
  fs::path out;
  json artifacts = json::object();
  json extra = json::object();

  void artifact(const fs::path& path) {
    artifacts[fs::relative(path, out).generic_string()] = sha256_file(path);
  }
};

class Source {
 public:
  Source(const std::string& spec, const SceneSpec& scene) {
    if (spec.rfind("scenes:", 0) == 0) {
      std::uint64_t first = 0;
      std::size_t count = 0;
      char sep = 0;
      std::istringstream in(spec.substr(7));
      if (!(in >> first >> sep >> count) || sep != ':' || count == 0) {
        throw ConfigError("data spec must be scenes:FIRST:COUNT, got '" + spec + "'");
      }
      scenes_ = std::make_unique<SceneSource>(scene, first, count);
      return;
    }
    fs::path p(spec);
    if (fs::is_directory(p)) {
      dataset_ = load_dataset(p, "annotations.json");
    } else {
      dataset_ = load_dataset(p.parent_path(), p.filename());
    }
  }
  const ImageSource& get() const {
    if (scenes_) return *scenes_;
    return *dataset_;
  }

 private:
  std::unique_ptr<SceneSource> scenes_;
  std::optional<Dataset> dataset_;
};

std::shared_ptr<const DetectorAdapter> resolve_detector(const std::string& id) {
  static const bool registered = [] {
    register_toy_factory(default_registry());
    return true;
  }();
  (void)registered;
  if (id.find(':') == std::string::npos && !default_registry().contains(id)) {
    return default_registry().resolve("toy:" + id);
  }
  return default_registry().resolve(id);
}

std::vector<std::shared_ptr<const DetectorAdapter>> resolve_all(const std::vector<std::string>& ids) {
  if (ids.empty()) throw ConfigError("no detector given (use --detector or attack.detectors)");
  std::vector<std::shared_ptr<const DetectorAdapter>> out;
  for (const std::string& id : ids) out.push_back(resolve_detector(id));
  return out;
}

EvalOptions eval_options(const ToolConfig& cfg) {
  EvalOptions o;
  o.rule = cfg.attack.rule;
  o.render = cfg.attack.render;
  o.seed = cfg.seed;
  o.threshold = cfg.eval.threshold;
  o.candidate_floor = cfg.eval.candidate_floor;
  o.nms_iou = cfg.eval.nms_iou;
  o.jobs = cfg.jobs;
  return o;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

json outcome_json(const OutcomeCounts& o) {
  return {{"success", o.success},
          {"partial", o.partial},
          {"failure", o.failure},
          {"success_rate", o.success_rate()},
          {"partial_rate", o.partial_rate()},
          {"failure_rate", o.failure_rate()}};
}

fs::path save_named_patch(Run& run, const Patch& patch, const std::string& name) {
  const fs::path png = run.out / (name + ".png");
  save_patch(png, patch);
  run.artifact(png);
  fs::path side = png;
  run.artifact(side.replace_extension(".json"));
  return png;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cloak: universal adversarial patches against object detectors"};
  app.require_subcommand(1);
  Common common;
  const auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config file");
    sub->add_option("--seed", common.seed, "Override the seed");
    sub->add_option("--jobs", common.jobs, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", common.out, "Output directory");
  };

  std::string data_spec;
  std::string val_spec;
  std::string held_out_spec;
  std::vector<std::string> detectors;
  std::vector<std::string> patches;
  std::string patch_path;
  std::string resume_path;
  std::uint64_t first = 0;
  std::size_t count = 100;
  std::string detector_id;
  std::string kind = "grey";
  std::string src_path;
  std::string image_path;
  std::vector<double> region;
  bool patched_only = false;
  std::optional<double> threshold;
  std::string distort_spec;
  std::string ladder_spec;
  std::size_t index = 0;
  bool sample_theta = false;

  auto* gen = app.add_subcommand("gen-data", "Render synthetic scenes as PNG + COCO annotations");
  add_common(gen);
  gen->add_option("--first", first, "First scene index");
  gen->add_option("--count", count, "Number of scenes")->check(CLI::PositiveNumber);

  auto* train_det = app.add_subcommand("train-detector", "Train and calibrate the toy detector");
  add_common(train_det);
  train_det->add_option("--train", data_spec, "Training data (DIR, annotations file or scenes:FIRST:COUNT)")
      ->required();
  train_det->add_option("--val", val_spec, "Calibration data")->required();
  train_det->add_option("--id", detector_id, "Detector id");

  auto* train = app.add_subcommand("train-patch", "Optimize an adversarial patch");
  add_common(train);
  train->add_option("--detector", detectors, "Detector id(s); repeatable");
  train->add_option("--data", data_spec, "Attack images")->required();
  train->add_option("--resume", resume_path, "Checkpoint to resume from");

  auto* control = app.add_subcommand("make-control", "Build a control patch");
  add_common(control);
  control->add_option("--kind", kind, "grey | random | flip | crop")
      ->check(CLI::IsMember({"grey", "random", "flip", "crop"}));
  control->add_option("--src", src_path, "Patch to flip");
  control->add_option("--image", image_path, "Image to crop from");
  control->add_option("--region", region, "Crop region x0 y0 x1 y1")->expected(4);

  auto* rgb = app.add_subcommand("optimize-rgb", "Find the most adversarial single color");
  add_common(rgb);
  rgb->add_option("--detector", detectors, "Detector id")->required();
  rgb->add_option("--data", data_spec, "Training images")->required();
  rgb->add_option("--held-out", held_out_spec, "Held-out images")->required();

  auto* eval = app.add_subcommand("eval", "AP and outcome rates for one patch and detector");
  add_common(eval);
  eval->add_option("--patch", patch_path, "Patch PNG (omit for the clean baseline)");
  eval->add_option("--detector", detector_id, "Detector id")->required();
  eval->add_option("--data", data_spec, "Evaluation images")->required();
  eval->add_flag("--patched-only", patched_only, "Report AP on patched persons only");
  eval->add_option("--threshold", threshold, "Outcome threshold (logit)");
  eval->add_option("--distort", distort_spec, "Distortion applied before detection");

  auto* transfer = app.add_subcommand("transfer", "Patch x detector AP matrix");
  add_common(transfer);
  transfer->add_option("--patch", patches, "Patch PNGs (rows)")->required();
  transfer->add_option("--detector", detectors, "Detector ids (columns)")->required();
  transfer->add_option("--data", data_spec, "Evaluation images")->required();

  auto* distort = app.add_subcommand("distort", "Attack degradation over a distortion ladder");
  add_common(distort);
  distort->add_option("--patch", patch_path, "Patch PNG")->required();
  distort->add_option("--detector", detector_id, "Detector id")->required();
  distort->add_option("--data", data_spec, "Evaluation images")->required();
  distort->add_option("--ladder", ladder_spec, "Rungs separated by ';' (default ladder if omitted)");

  auto* preview = app.add_subcommand("render-preview", "Render a patch onto one image");
  add_common(preview);
  preview->add_option("--patch", patch_path, "Patch PNG")->required();
  preview->add_option("--data", data_spec, "Images")->required();
  preview->add_option("--index", index, "Image index");
  preview->add_flag("--sample-theta", sample_theta, "Apply a random training transform");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }
  CLI::App* cmd = app.get_subcommands().front();

  const auto started = std::chrono::steady_clock::now();
  Run run;
  run.out = common.out;
  ExitCode status = ExitCode::kOk;
  std::string error;
  try {
    fs::create_directories(run.out);
    if (!common.config_path.empty()) run.cfg = load_tool_config(common.config_path);
    ToolConfig& cfg = run.cfg;
    if (common.jobs) cfg.jobs = *common.jobs;
    if (common.seed) cfg.seed = *common.seed;
    cfg.attack.jobs = cfg.jobs;
    cfg.detector.jobs = cfg.jobs;
    if (threshold) cfg.eval.threshold = threshold;
    if (patched_only) cfg.eval.patched_only = true;
    const std::string name = cmd->get_name();

    if (name == "gen-data") {
      if (common.seed) cfg.scene.seed = *common.seed;
      const Dataset d = export_scenes(cfg.scene, first, count, run.out, cfg.jobs);
      run.artifact(run.out / "annotations.json");
      for (const DatasetImage& img : d.images()) run.artifact(run.out / img.file_name);
    } else if (name == "train-detector") {
      if (common.seed) cfg.detector.seed = *common.seed;
      if (!detector_id.empty()) cfg.detector.id = detector_id;
      const Source tr(data_spec, cfg.scene);
      const Source val(val_spec, cfg.scene);
      ToyTrainReport report;
      const auto det = train_toy_detector(cfg.detector, tr.get(), val.get(), &report);
      det->save(run.out / "detector.json");
      run.artifact(run.out / "detector.json");
      run.extra = {{"epoch_loss", report.epoch_loss},
                   {"val_ap", report.val_ap},
                   {"threshold", report.threshold},
                   {"logit_offset", report.logit_offset}};
      std::cout << "val AP " << report.val_ap << ", calibrated threshold " << report.threshold << '\n';
    } else if (name == "train-patch") {
      if (common.seed) cfg.attack.seed = *common.seed;
      if (!detectors.empty()) cfg.attack.detectors = detectors;
      const auto dets = resolve_all(cfg.attack.detectors);
      const Source data(data_spec, cfg.scene);
      TrainOptions opt;
      opt.config_hash = config_hash(to_json(cfg.attack));
      opt.checkpoint_dir = run.out / "checkpoints";
      if (!resume_path.empty()) opt.resume = TrainCheckpoint::load(resume_path);
      std::ofstream log(run.out / "train_log.jsonl", resume_path.empty() ? std::ios::trunc : std::ios::app);
      opt.log = &log;
      TrainHistory history;
      const Patch patch = train_patch(cfg.attack, dets, data.get(), opt, &history);
      log.close();
      save_named_patch(run, patch, "patch");
      run.artifact(run.out / "train_log.jsonl");
      json ckpts = json::array();
      for (const auto& [epoch, hash] : history.checkpoints) ckpts.push_back({{"epoch", epoch}, {"sha256", hash}});
      run.extra = {{"epochs_run", history.epochs.size()}, {"checkpoints", ckpts}};
      if (!history.epochs.empty()) run.extra["final_loss"] = history.epochs.back().loss.total;
    } else if (name == "make-control") {
      const int h = cfg.attack.patch_height;
      const int w = cfg.attack.patch_width;
      Patch p;
      if (kind == "grey") {
        p = make_grey_patch(h, w);
      } else if (kind == "random") {
        p = make_random_patch(h, w, cfg.seed);
      } else if (kind == "flip") {
        if (src_path.empty()) throw ConfigError("flip needs --src");
        p = make_flipped_patch(load_patch(src_path));
      } else {
        if (image_path.empty() || region.size() != 4) throw ConfigError("crop needs --image and --region");
        const ImageBuffer img{read_image(image_path), image_path};
        p = make_crop_patch(img, {region[0], region[1], region[2], region[3], 0, std::nullopt}, h, w);
      }
      p.meta.created_at = utc_timestamp();
      save_named_patch(run, p, kind);
    } else if (name == "optimize-rgb") {
      if (common.seed) cfg.attack.seed = *common.seed;
      const auto dets = resolve_all(detectors);
      if (dets.size() != 1) throw ConfigError("optimize-rgb takes exactly one detector");
      const Source data(data_spec, cfg.scene);
      const Source held(held_out_spec, cfg.scene);
      std::ofstream log(run.out / "train_log.jsonl");
      const RgbResult r = optimize_rgb(cfg.attack, dets, data.get(), held.get(), &log);
      log.close();
      save_named_patch(run, r.patch, "grey_pp");
      run.extra = {{"rgb", r.rgb}, {"loss", r.loss}, {"grey_loss", r.grey_loss}, {"best_epoch", r.best_epoch}};
      std::cout << "rgb " << r.rgb[0] << ' ' << r.rgb[1] << ' ' << r.rgb[2] << ", held-out loss " << r.loss
                << " (grey " << r.grey_loss << ")\n";
    } else if (name == "eval") {
      const auto det = resolve_detector(detector_id);
      const Source data(data_spec, cfg.scene);
      EvalOptions opt = eval_options(cfg);
      if (!patch_path.empty()) opt.patch = load_patch(patch_path);
      const DistortionSpec spec = DistortionSpec::parse(distort_spec);
      if (!spec.is_identity()) {
        opt.post_process = [spec](const ImageBuffer& im, std::size_t) { return apply(spec, im); };
      }
      const EvalResult r = evaluate(*det, data.get(), opt);
      json metrics = {{"detector", det->id()},
                      {"patch", patch_path.empty() ? json(nullptr) : json(patch_path)},
                      {"distortion", spec.to_string()},
                      {"patched_only", cfg.eval.patched_only},
                      {"ap", cfg.eval.patched_only ? r.patched_ap : r.ap},
                      {"all_person_ap", r.ap},
                      {"patched_ap", r.patched_ap},
                      {"threshold", r.threshold},
                      {"outcomes", outcome_json(r.outcomes)}};
      write_text(run.out / "metrics.json", metrics.dump(2) + "\n");
      run.artifact(run.out / "metrics.json");
      std::cout << metrics.dump(2) << '\n';
    } else if (name == "transfer") {
      std::vector<NamedPatch> named;
      for (const std::string& p : patches) named.push_back({fs::path(p).stem().string(), load_patch(p)});
      const auto dets = resolve_all(detectors);
      const Source data(data_spec, cfg.scene);
      const TransferMatrix m = transfer_matrix(named, dets, data.get(), eval_options(cfg));
      write_text(run.out / "transfer.csv", m.to_csv());
      run.artifact(run.out / "transfer.csv");
      std::cout << m.to_csv();
    } else if (name == "distort") {
      const auto det = resolve_detector(detector_id);
      const Source data(data_spec, cfg.scene);
      const Patch patch = load_patch(patch_path);
      std::vector<DistortionSpec> ladder;
      if (ladder_spec.empty()) {
        ladder = default_ladder();
      } else {
        std::stringstream ss(ladder_spec);
        for (std::string rung; std::getline(ss, rung, ';');) ladder.push_back(DistortionSpec::parse(rung));
      }
      const EvalOptions opt = eval_options(cfg);
      const DegradationReport rep = degradation_report(patch, *det, data.get(), ladder, opt);
      write_text(run.out / "degradation.csv", rep.to_csv());
      run.artifact(run.out / "degradation.csv");
      fs::create_directories(run.out / "samples");
      const LabeledImage sample = data.get().at(0);
      std::vector<BBox> persons;
      for (const BBox& b : sample.boxes) {
        if (b.class_id == kPersonClass) persons.push_back(b);
      }
      const std::vector<RenderParams> identity(persons.size());
      const ImageBuffer patched = render(sample.image, patch, persons, identity, opt.rule, opt.render);
      for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        const fs::path png = run.out / "samples" / ("rung_" + std::to_string(i) + ".png");
        write_png(png, apply(rep.rows[i].spec, patched.pixels));
        run.artifact(png);
      }
      std::cout << rep.to_csv();
    } else if (name == "render-preview") {
      const Source data(data_spec, cfg.scene);
      if (index >= data.get().size()) throw ConfigError("--index beyond the data");
      const Patch patch = load_patch(patch_path);
      const LabeledImage item = data.get().at(index);
      std::vector<BBox> persons;
      for (const BBox& b : item.boxes) {
        if (b.class_id == kPersonClass) persons.push_back(b);
      }
      std::vector<RenderParams> params(persons.size());
      if (sample_theta) {
        for (std::size_t b = 0; b < params.size(); ++b) {
          params[b] = sample_params(derive_seed(cfg.seed, {index, b}), cfg.attack.ranges);
        }
      }
      const ImageBuffer out = render(item.image, patch, persons, params, cfg.attack.rule, cfg.attack.render);
      write_png(run.out / "preview.png", out.pixels);
      run.artifact(run.out / "preview.png");
    }
  } catch (const Error& e) {
    status = e.code();
    error = e.what();
    if (const auto* d = dynamic_cast<const DivergenceError*>(&e); d != nullptr && !d->checkpoint().empty()) {
      error += " (last checkpoint: " + d->checkpoint() + ")";
    }
  } catch (const std::exception& e) {
    status = ExitCode::kInternal;
    error = e.what();
  }

  json manifest;
  manifest["command"] = cmd->get_name();
  manifest["argv"] = std::vector<std::string>(argv, argv + argc);
  manifest["config"] = to_json(run.cfg);
  manifest["config_hash"] = config_hash(manifest["config"]);
  manifest["seed"] = run.cfg.seed;
  manifest["artifacts"] = run.artifacts;
  manifest["exit_status"] = static_cast<int>(status);
  if (!error.empty()) manifest["error"] = error;
  if (!run.extra.empty()) manifest["result"] = run.extra;
  manifest["finished_at"] = utc_timestamp();
  manifest["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  try {
    fs::create_directories(run.out);
    write_text(run.out / "manifest.json", manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    std::cerr << "warning: manifest not written: " << e.what() << '\n';
  }
  if (status != ExitCode::kOk) std::cerr << "error: " << error << '\n';
  return static_cast<int>(status);
}
