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

#include "cloak/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "cloak/errors.hpp"

namespace cloak {

double objectness_loss(std::span<const double> scores) {
  double sum = 0.0;
  for (double s : scores) {
    if (std::isnan(s)) throw AdapterFaultError("objectness_loss: detector produced a NaN score");
    const double h = std::max(s + 1.0, 0.0);
    sum += h * h;
  }
  return sum;
}

double objectness_loss(const ScoreMap& map) { return objectness_loss(map.scores); }

std::vector<double> objectness_gradient(std::span<const double> scores, double scale) {
  std::vector<double> g(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw AdapterFaultError("objectness_gradient: NaN score");
    g[i] = scale * 2.0 * std::max(scores[i] + 1.0, 0.0);
  }
  return g;
}

double tv_penalty(const PixelGrid& patch, double eps) {
  const int h = patch.height();
  const int w = patch.width();
  double sum = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double p = patch.at(y, x, c);
        const double fx = x + 1 < w ? patch.at(y, x + 1, c) - p : 0.0;
        const double fy = y + 1 < h ? patch.at(y + 1, x, c) - p : 0.0;
        const double bx = x > 0 ? p - patch.at(y, x - 1, c) : 0.0;
        const double by = y > 0 ? p - patch.at(y - 1, x, c) : 0.0;
        sum += 0.5 * (std::sqrt(fx * fx + fy * fy + eps) + std::sqrt(bx * bx + by * by + eps));
      }
    }
  }
  return sum;
}

void tv_gradient(const PixelGrid& patch, std::span<double> grad, double scale, double eps) {
  const int h = patch.height();
  const int w = patch.width();
  const double half = 0.5 * scale;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double p = patch.at(y, x, c);
        const std::size_t i = patch.index(y, x, c);
        const double fx = x + 1 < w ? patch.at(y, x + 1, c) - p : 0.0;
        const double fy = y + 1 < h ? patch.at(y + 1, x, c) - p : 0.0;
        const double tf = std::sqrt(fx * fx + fy * fy + eps);
        if (x + 1 < w) grad[patch.index(y, x + 1, c)] += half * fx / tf;
        if (y + 1 < h) grad[patch.index(y + 1, x, c)] += half * fy / tf;
        grad[i] -= half * (fx + fy) / tf;

        const double bx = x > 0 ? p - patch.at(y, x - 1, c) : 0.0;
        const double by = y > 0 ? p - patch.at(y - 1, x, c) : 0.0;
        const double tb = std::sqrt(bx * bx + by * by + eps);
        if (x > 0) grad[patch.index(y, x - 1, c)] -= half * bx / tb;
        if (y > 0) grad[patch.index(y - 1, x, c)] -= half * by / tb;
        grad[i] += half * (bx + by) / tb;
      }
    }
  }
}

double ensemble_loss(std::span<const ScoreMap> score_maps, std::span<const double> weights) {
  if (score_maps.empty()) throw ConfigError("ensemble_loss: need at least one detector");
  if (!weights.empty() && weights.size() != score_maps.size()) {
    throw ConfigError("ensemble_loss: one weight per detector required");
  }
  std::vector<std::pair<const std::string*, double>> terms;
  terms.reserve(score_maps.size());
  for (std::size_t j = 0; j < score_maps.size(); ++j) {
    const double wj = weights.empty() ? 1.0 : weights[j];
    terms.emplace_back(&score_maps[j].detector_id, wj * objectness_loss(score_maps[j]));
  }
  std::sort(terms.begin(), terms.end(), [](const auto& a, const auto& b) {
    if (*a.first != *b.first) return *a.first < *b.first;
    return a.second < b.second;
  });
  double sum = 0.0;
  for (const auto& t : terms) sum += t.second;
  return sum;
}

LossReport total_loss(std::span<const ScoreMap> score_maps, const PixelGrid& patch, double gamma) {
  if (!(gamma >= 0.0)) throw ConfigError("total_loss: gamma must be non-negative");
  LossReport r;
  r.gamma = gamma;
  r.obj_loss = ensemble_loss(score_maps);
  for (const ScoreMap& m : score_maps) r.per_detector[m.detector_id] += objectness_loss(m);
  r.tv_loss = tv_penalty(patch);
  r.total = r.obj_loss + gamma * r.tv_loss;
  return r;
}

LossReport total_loss(const ScoreMap& scores, const PixelGrid& patch, double gamma) {
  return total_loss(std::span<const ScoreMap>(&scores, 1), patch, gamma);
}

}  // namespace cloak
