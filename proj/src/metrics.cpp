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

#include "cloak/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "cloak/errors.hpp"
#include "cloak/parallel.hpp"
#include "cloak/rng.hpp"

namespace cloak {
namespace {

struct RankedDet {
  double score;
  std::size_t record;
  const BBox* box;
};

// Ground truth considered for `record` under the chosen mode.
std::vector<const BBox*> positives(const EvalRecord& r, int class_id, bool patched_only) {
  std::vector<const BBox*> out;
  if (patched_only) {
    for (std::size_t id : r.patched_gt_ids) {
      if (id >= r.gts.size()) throw DataError("patched_gt_ids out of range");
      if (r.gts[id].class_id == class_id) out.push_back(&r.gts[id]);
    }
  } else {
    for (const BBox& g : r.gts) {
      if (g.class_id == class_id) out.push_back(&g);
    }
  }
  return out;
}

struct MatchSequence {
  std::vector<double> scores;  // descending
  std::vector<bool> true_positive;
  std::size_t positives = 0;
};

// Greedy matching in descending score order.
MatchSequence match_all(std::span<const EvalRecord> records, int class_id, double iou_thresh,
                        bool patched_only) {
  MatchSequence seq;
  std::vector<std::vector<const BBox*>> gts(records.size());
  std::vector<RankedDet> dets;
  for (std::size_t r = 0; r < records.size(); ++r) {
    gts[r] = positives(records[r], class_id, patched_only);
    seq.positives += gts[r].size();
    for (const BBox& d : records[r].detections) {
      if (d.class_id != class_id) continue;
      if (patched_only && std::none_of(gts[r].begin(), gts[r].end(), [&](const BBox* g) {
            return intersection_area(d, *g) > 0.0;
          })) {
        continue;
      }
      dets.push_back({d.score.value_or(0.0), r, &d});
    }
  }
  std::stable_sort(dets.begin(), dets.end(),
                   [](const RankedDet& a, const RankedDet& b) { return a.score > b.score; });
  std::vector<std::vector<bool>> used(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) used[r].assign(gts[r].size(), false);
  for (const RankedDet& d : dets) {
    double best = -1.0;
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < gts[d.record].size(); ++j) {
      if (used[d.record][j]) continue;
      const double v = iou(*d.box, *gts[d.record][j]);
      if (v > best) {
        best = v;
        best_j = j;
      }
    }
    const bool tp = best >= iou_thresh;
    if (tp) used[d.record][best_j] = true;
    seq.scores.push_back(d.score);
    seq.true_positive.push_back(tp);
  }
  return seq;
}

}  // namespace

const char* to_string(Outcome outcome) noexcept {
  switch (outcome) {
    case Outcome::kSuccess:
      return "SUCCESS";
    case Outcome::kPartial:
      return "PARTIAL";
    case Outcome::kFailure:
      return "FAILURE";
  }
  return "?";
}

double average_precision(std::span<const EvalRecord> records, int class_id, double iou_thresh,
                         bool patched_only) {
  const MatchSequence seq = match_all(records, class_id, iou_thresh, patched_only);
  if (seq.positives == 0) {
    throw UndefinedMetricError("average precision is undefined without ground-truth positives");
  }
  const std::size_t n = seq.scores.size();
  std::vector<double> precision(n);
  std::vector<double> recall(n);
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (seq.true_positive[i]) ++tp;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(tp) / static_cast<double>(seq.positives);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

Outcome classify_outcome(std::span<const BBox> dets, const BBox& person) {
  bool overlapping = false;
  for (const BBox& d : dets) {
    const double cov = coverage_fraction(d, person);
    if (cov >= 0.5) return Outcome::kFailure;
    if (cov > 0.0) overlapping = true;
  }
  return overlapping ? Outcome::kPartial : Outcome::kSuccess;
}

ThresholdChoice tune_threshold(std::span<const EvalRecord> records, int class_id,
                               double iou_thresh) {
  const MatchSequence seq = match_all(records, class_id, iou_thresh, false);
  if (seq.scores.empty()) throw CalibrationError("tune_threshold: no detections to calibrate on");
  ThresholdChoice best{seq.scores.front(), -1.0};
  std::size_t tp = 0;
  for (std::size_t i = 0; i < seq.scores.size(); ++i) {
    if (seq.true_positive[i]) ++tp;
    // Evaluate only at the last detection of a run of equal scores.
    if (i + 1 < seq.scores.size() && seq.scores[i + 1] == seq.scores[i]) continue;
    const double fp = static_cast<double>(i + 1 - tp);
    const double fn = static_cast<double>(seq.positives - tp);
    const double denom = 2.0 * static_cast<double>(tp) + fp + fn;
    const double f1 = denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    if (f1 > best.f1) best = {seq.scores[i], f1};
  }
  return best;
}

double OutcomeCounts::success_rate() const noexcept {
  return total() == 0 ? 0.0 : static_cast<double>(success) / static_cast<double>(total());
}
double OutcomeCounts::partial_rate() const noexcept {
  return total() == 0 ? 0.0 : static_cast<double>(partial) / static_cast<double>(total());
}
double OutcomeCounts::failure_rate() const noexcept {
  return total() == 0 ? 0.0 : static_cast<double>(failure) / static_cast<double>(total());
}

OutcomeCounts tally_outcomes(std::span<const EvalRecord> records, double threshold, int class_id) {
  OutcomeCounts counts;
  for (const EvalRecord& r : records) {
    std::vector<BBox> kept;
    for (const BBox& d : r.detections) {
      if (d.class_id == class_id && d.score.value_or(0.0) >= threshold) kept.push_back(d);
    }
    for (std::size_t id : r.patched_gt_ids) {
      switch (classify_outcome(kept, r.gts.at(id))) {
        case Outcome::kSuccess:
          ++counts.success;
          break;
        case Outcome::kPartial:
          ++counts.partial;
          break;
        case Outcome::kFailure:
          ++counts.failure;
          break;
      }
    }
  }
  return counts;
}

EvalResult evaluate(const DetectorAdapter& adapter, const ImageSource& data,
                    const EvalOptions& options) {
  EvalResult result;
  if (options.threshold) {
    result.threshold = *options.threshold;
  } else if (auto t = adapter.calibrated_threshold()) {
    result.threshold = *t;
  } else {
    throw CalibrationError("detector '" + adapter.id() +
                           "' has no calibrated threshold; pass --threshold or calibrate it");
  }
  options.ranges.validate();

  result.records.resize(data.size());
  parallel_for(data.size(), options.jobs, [&](std::size_t i) {
    const LabeledImage sample = data.at(i);
    EvalRecord& rec = result.records[i];
    rec.image_id = sample.image.source_id.empty() ? std::to_string(i) : sample.image.source_id;
    rec.gts = sample.boxes;
    std::vector<BBox> persons;
    for (std::size_t g = 0; g < sample.boxes.size(); ++g) {
      if (sample.boxes[g].class_id == options.class_id) {
        rec.patched_gt_ids.push_back(g);
        persons.push_back(sample.boxes[g]);
      }
    }
    ImageBuffer image = sample.image;
    if (options.patch) {
      std::vector<RenderParams> params;
      for (std::size_t b = 0; b < persons.size(); ++b) {
        params.push_back(sample_params(derive_seed(options.seed, {i, b}), options.ranges));
      }
      image = render(sample.image, *options.patch, persons, params, options.rule, options.render);
    }
    if (options.post_process) image = options.post_process(image, i);
    rec.detections = select_detections(adapter.candidates(image), options.candidate_floor,
                                       options.nms_iou, options.max_detections);
  });

  result.ap = average_precision(result.records, options.class_id, 0.5, false);
  result.patched_ap = average_precision(result.records, options.class_id, 0.5, true);
  result.outcomes = tally_outcomes(result.records, result.threshold, options.class_id);
  return result;
}

std::string TransferMatrix::to_csv() const {
  std::ostringstream out;
  out << "patch";
  for (const auto& c : columns) out << ',' << c;
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << rows[r];
    for (double v : ap[r]) {
      std::snprintf(buf, sizeof buf, "%.6f", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  return out.str();
}

double TransferMatrix::at(const std::string& row, const std::string& column) const {
  const auto r = std::find(rows.begin(), rows.end(), row);
  const auto c = std::find(columns.begin(), columns.end(), column);
  if (r == rows.end() || c == columns.end()) throw ConfigError("transfer matrix: no such cell");
  return ap[static_cast<std::size_t>(r - rows.begin())][static_cast<std::size_t>(c - columns.begin())];
}

TransferMatrix transfer_matrix(std::span<const NamedPatch> patches,
                               std::span<const std::shared_ptr<const DetectorAdapter>> adapters,
                               const ImageSource& data, const EvalOptions& base,
                               bool include_clean) {
  TransferMatrix m;
  for (const auto& a : adapters) m.columns.push_back(a->id());
  auto run_row = [&](const std::string& name, const std::optional<Patch>& patch) {
    m.rows.push_back(name);
    std::vector<double> row;
    for (const auto& a : adapters) {
      EvalOptions opts = base;
      opts.patch = patch;
      if (!opts.threshold && !a->calibrated_threshold()) opts.threshold = 0.0;
      row.push_back(evaluate(*a, data, opts).patched_ap);
    }
    m.ap.push_back(std::move(row));
  };
  for (const NamedPatch& p : patches) run_row(p.name, p.patch);
  if (include_clean) run_row("CLEAN", std::nullopt);
  return m;
}

}  // namespace cloak
