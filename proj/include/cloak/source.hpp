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

#ifndef CLOAK_SOURCE_HPP
#define CLOAK_SOURCE_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "cloak/core.hpp"

namespace cloak {

/// Indexed, read-only collection of labeled images. Implementations may
/// decode or synthesize on demand; `at` must be deterministic and safe to
/// call concurrently.
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual std::size_t size() const = 0;
  virtual LabeledImage at(std::size_t index) const = 0;
};

class InMemorySource final : public ImageSource {
 public:
  explicit InMemorySource(std::span<const LabeledImage> items) : items_(items) {}
  std::size_t size() const override { return items_.size(); }
  LabeledImage at(std::size_t index) const override { return items_[index]; }

 private:
  std::span<const LabeledImage> items_;
};

/// Materializes every item (for small sets).
std::vector<LabeledImage> collect(const ImageSource& source);

}  // namespace cloak

#endif  // CLOAK_SOURCE_HPP
