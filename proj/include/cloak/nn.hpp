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

#ifndef CLOAK_NN_HPP
#define CLOAK_NN_HPP

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace cloak::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Channel-major activation tensor.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w) : channels(c), height(h), width(w), data(std::size_t(c) * h * w) {}
  double& at(int c, int y, int x) { return data[(std::size_t(c) * height + y) * width + x]; }
  double at(int c, int y, int x) const { return data[(std::size_t(c) * height + y) * width + x]; }
};

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
};

/// Plain convolution stack; SiLU after every layer except the last.
class ConvNet {
 public:
  struct Workspace {
    std::vector<RowMatrix> columns;
    std::vector<std::vector<double>> pre_activation;
    std::vector<Tensor> outputs;
  };

  ConvNet() = default;
  explicit ConvNet(std::vector<ConvSpec> layers);

  const std::vector<ConvSpec>& layers() const noexcept { return layers_; }
  std::size_t parameter_count() const noexcept { return parameters_.size(); }
  std::span<double> parameters() noexcept { return parameters_; }
  std::span<const double> parameters() const noexcept { return parameters_; }

  /// Bias vector of one layer.
  std::span<double> bias(std::size_t layer);
  /// He-normal weights, zero biases.
  void initialize(std::uint64_t seed);

  /// Output spatial size for a given input size.
  std::pair<int, int> output_size(int height, int width) const;

  Tensor forward(const Tensor& input, Workspace* workspace = nullptr) const;

  /// Backpropagates `grad_output`. Accumulates into `param_grad` when it is
  /// non-empty and writes the input gradient when `grad_input` is non-null.
  void backward(const Workspace& workspace, const Tensor& input, const Tensor& grad_output,
                std::span<double> param_grad, Tensor* grad_input) const;

 private:
  std::vector<ConvSpec> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> parameters_;
};

}  // namespace cloak::nn

#endif  // CLOAK_NN_HPP
