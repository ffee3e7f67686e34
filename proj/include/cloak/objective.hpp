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

#ifndef CLOAK_OBJECTIVE_HPP
#define CLOAK_OBJECTIVE_HPP

#include <map>
#include <span>
#include <string>
#include <vector>

#include "cloak/core.hpp"
#include "cloak/detectors.hpp"

namespace cloak {

/// Smoothing constant inside the TV square root.
inline constexpr double kTvEpsilon = 1e-8;
inline constexpr double kDefaultTvWeight = 1e-4;

struct LossReport {
  double obj_loss = 0.0;
  double tv_loss = 0.0;
  double gamma = 0.0;
  double total = 0.0;
  std::map<std::string, double> per_detector;
};

/// Sum over priors of max(s + 1, 0)^2. Throws AdapterFaultError on NaN.
double objectness_loss(std::span<const double> scores);
double objectness_loss(const ScoreMap& map);

/// d objectness_loss / d s_i = 2 max(s_i + 1, 0), scaled by `scale`.
std::vector<double> objectness_gradient(std::span<const double> scores, double scale = 1.0);

/// Isotropic, epsilon-smoothed total variation, symmetrised over forward and
/// backward differences:
///
///   TV(p) = 1/2 sum_{y,x,c} [ sqrt((D+x p)^2 + (D+y p)^2 + eps)
///                           + sqrt((D-x p)^2 + (D-y p)^2 + eps) ]
///
/// where differences that would leave the grid are zero. The two halves map
/// onto each other under a 180 degree rotation, so TV is rotation invariant.
double tv_penalty(const PixelGrid& patch, double eps = kTvEpsilon);

/// grad += scale * d tv_penalty / d patch.
void tv_gradient(const PixelGrid& patch, std::span<double> grad, double scale = 1.0,
                 double eps = kTvEpsilon);

/// Sum of objectness losses over detectors, added in (detector_id, loss)
/// order so the result does not depend on list order. `weights` is empty
/// (all ones) or one weight per map. Throws ConfigError on an empty list.
double ensemble_loss(std::span<const ScoreMap> score_maps, std::span<const double> weights = {});

/// obj + gamma * TV with per-detector breakdown. Throws ConfigError when
/// gamma < 0.
LossReport total_loss(std::span<const ScoreMap> score_maps, const PixelGrid& patch, double gamma);
LossReport total_loss(const ScoreMap& scores, const PixelGrid& patch, double gamma);

}  // namespace cloak

#endif  // CLOAK_OBJECTIVE_HPP
