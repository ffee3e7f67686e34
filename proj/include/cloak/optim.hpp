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

#ifndef CLOAK_OPTIM_HPP
#define CLOAK_OPTIM_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cloak {

/// Adam over a flat parameter vector.
class Adam {
 public:
  explicit Adam(std::size_t size, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  void step(std::span<double> params, std::span<const double> grad);

  double learning_rate() const noexcept { return lr_; }
  void set_learning_rate(double lr) noexcept { lr_ = lr; }
  std::uint64_t steps() const noexcept { return t_; }

  // Checkpoint access.
  std::span<const double> first_moment() const noexcept { return m_; }
  std::span<const double> second_moment() const noexcept { return v_; }
  void restore(std::vector<double> m, std::vector<double> v, std::uint64_t t);

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::uint64_t t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

/// Step decay: lr * factor^(floor(epoch / every)).
double step_decay(double base_lr, int epoch, int every, double factor);

}  // namespace cloak

#endif  // CLOAK_OPTIM_HPP
