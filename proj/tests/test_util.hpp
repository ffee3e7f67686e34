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

#ifndef CLOAK_TESTS_TEST_UTIL_HPP
#define CLOAK_TESTS_TEST_UTIL_HPP

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "cloak/core.hpp"
#include "cloak/rng.hpp"
#include "cloak/toydet.hpp"

namespace cloak::testing {

inline BBox box(double x0, double y0, double x1, double y1, int class_id = kPersonClass,
                std::optional<double> score = std::nullopt) {
  return BBox{x0, y0, x1, y1, class_id, score};
}

inline PixelGrid random_grid(int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  PixelGrid g(h, w);
  Rng rng(seed);
  for (double& v : g.values()) v = rng.uniform(lo, hi);
  return g;
}

inline SceneSpec print_scenes(std::uint64_t seed = 7) {
  SceneSpec s;
  s.seed = seed;
  s.print_probability = 0.5;
  return s;
}

/// Freshly initialized (untrained) toy detector with the default layout.
inline std::shared_ptr<ToyDetector> untrained_detector(std::uint64_t seed = 1,
                                                       const std::string& id = "toy") {
  ToyDetectorConfig cfg;
  cfg.id = id;
  nn::ConvNet net(cfg.layers());
  net.initialize(seed);
  return std::make_shared<ToyDetector>(cfg, std::move(net));
}

/// Briefly trained toy detector, shared within one test binary.
inline std::shared_ptr<const ToyDetector> quick_detector() {
  static const std::shared_ptr<const ToyDetector> det = [] {
    ToyDetectorConfig cfg;
    cfg.epochs = 3;
    cfg.lr_decay_every = 2;
    cfg.ap_floor = 0.0;
    const SceneSpec spec = print_scenes();
    SceneSource train(spec, 0, 160);
    SceneSource val(spec, 100000, 40);
    return std::shared_ptr<const ToyDetector>(train_toy_detector(cfg, train, val));
  }();
  return det;
}

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "cloak-test-XXXXXX").string();
    if (mkdtemp(tmpl.data()) == nullptr) std::abort();
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace cloak::testing

#endif  // CLOAK_TESTS_TEST_UTIL_HPP
