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

#include "cloak/nn.hpp"

#include <cmath>

#include "cloak/errors.hpp"
#include "cloak/rng.hpp"

namespace cloak::nn {
namespace {

int out_dim(int in, const ConvSpec& s) { return (in + 2 * s.padding - s.kernel) / s.stride + 1; }

// Rows: (ci, ky, kx); columns: output positions.
void im2col(const Tensor& in, const ConvSpec& s, int oh, int ow, RowMatrix& col) {
  const int k = s.kernel;
  col.resize(static_cast<Eigen::Index>(s.in_channels) * k * k,
             static_cast<Eigen::Index>(oh) * ow);
  for (int ci = 0; ci < s.in_channels; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* row = col.row((ci * k + ky) * k + kx).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s.stride - s.padding + ky;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * s.stride - s.padding + kx;
            row[oy * ow + ox] =
                (iy >= 0 && iy < in.height && ix >= 0 && ix < in.width) ? in.at(ci, iy, ix) : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const RowMatrix& col, const ConvSpec& s, int oh, int ow, Tensor& out) {
  const int k = s.kernel;
  for (int ci = 0; ci < s.in_channels; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* row = col.row((ci * k + ky) * k + kx).data();
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * s.stride - s.padding + ky;
          if (iy < 0 || iy >= out.height) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * s.stride - s.padding + kx;
            if (ix < 0 || ix >= out.width) continue;
            out.at(ci, iy, ix) += row[oy * ow + ox];
          }
        }
      }
    }
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

ConvNet::ConvNet(std::vector<ConvSpec> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("ConvNet: no layers");
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const ConvSpec& s = layers_[l];
    if (l > 0 && s.in_channels != layers_[l - 1].out_channels) {
      throw ConfigError("ConvNet: channel mismatch between layers");
    }
    offsets_.push_back(offset);
    offset += std::size_t(s.out_channels) * s.in_channels * s.kernel * s.kernel + s.out_channels;
  }
  parameters_.assign(offset, 0.0);
}

std::span<double> ConvNet::bias(std::size_t layer) {
  const ConvSpec& s = layers_.at(layer);
  const std::size_t weights = std::size_t(s.out_channels) * s.in_channels * s.kernel * s.kernel;
  return {parameters_.data() + offsets_[layer] + weights, static_cast<std::size_t>(s.out_channels)};
}

void ConvNet::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const ConvSpec& s = layers_[l];
    const std::size_t fan_in = std::size_t(s.in_channels) * s.kernel * s.kernel;
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    double* w = parameters_.data() + offsets_[l];
    for (std::size_t i = 0; i < fan_in * s.out_channels; ++i) w[i] = stddev * rng.normal();
    for (int i = 0; i < s.out_channels; ++i) w[fan_in * s.out_channels + i] = 0.0;
  }
}

std::pair<int, int> ConvNet::output_size(int height, int width) const {
  for (const ConvSpec& s : layers_) {
    height = out_dim(height, s);
    width = out_dim(width, s);
  }
  return {height, width};
}

Tensor ConvNet::forward(const Tensor& input, Workspace* ws) const {
  if (input.channels != layers_.front().in_channels) {
    throw InputError("ConvNet: input channel count mismatch");
  }
  if (ws != nullptr) {
    ws->columns.resize(layers_.size());
    ws->pre_activation.resize(layers_.size());
    ws->outputs.resize(layers_.size());
  }
  RowMatrix local_col;
  Tensor current = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const ConvSpec& s = layers_[l];
    const int oh = out_dim(current.height, s);
    const int ow = out_dim(current.width, s);
    if (oh <= 0 || ow <= 0) throw InputError("ConvNet: input too small for the network");
    RowMatrix& col = ws != nullptr ? ws->columns[l] : local_col;
    im2col(current, s, oh, ow, col);

    const auto fan_in = static_cast<Eigen::Index>(s.in_channels) * s.kernel * s.kernel;
    const double* p = parameters_.data() + offsets_[l];
    Eigen::Map<const RowMatrix> weight(p, s.out_channels, fan_in);
    Eigen::Map<const Eigen::VectorXd> bias(p + s.out_channels * fan_in, s.out_channels);

    Tensor next(s.out_channels, oh, ow);
    Eigen::Map<RowMatrix> out(next.data.data(), s.out_channels, static_cast<Eigen::Index>(oh) * ow);
    out.noalias() = weight * col;
    out.colwise() += bias;

    if (l + 1 < layers_.size()) {
      if (ws != nullptr) ws->pre_activation[l] = next.data;
      for (double& v : next.data) v = v * sigmoid(v);
    }
    current = std::move(next);
    if (ws != nullptr) ws->outputs[l] = current;
  }
  return current;
}

void ConvNet::backward(const Workspace& ws, const Tensor& input, const Tensor& grad_output,
                       std::span<double> param_grad, Tensor* grad_input) const {
  Tensor grad = grad_output;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const ConvSpec& s = layers_[li];
    const Tensor& in = li == 0 ? input : ws.outputs[li - 1];
    const int oh = ws.outputs[li].height;
    const int ow = ws.outputs[li].width;
    if (li + 1 < layers_.size()) {
      const std::vector<double>& pre = ws.pre_activation[li];
      for (std::size_t i = 0; i < grad.data.size(); ++i) {
        const double sg = sigmoid(pre[i]);
        grad.data[i] *= sg * (1.0 + pre[i] * (1.0 - sg));
      }
    }
    const auto fan_in = static_cast<Eigen::Index>(s.in_channels) * s.kernel * s.kernel;
    const auto positions = static_cast<Eigen::Index>(oh) * ow;
    Eigen::Map<const RowMatrix> g(grad.data.data(), s.out_channels, positions);
    const RowMatrix& col = ws.columns[li];

    if (!param_grad.empty()) {
      double* pg = param_grad.data() + offsets_[li];
      Eigen::Map<RowMatrix> dw(pg, s.out_channels, fan_in);
      Eigen::Map<Eigen::VectorXd> db(pg + s.out_channels * fan_in, s.out_channels);
      dw.noalias() += g * col.transpose();
      for (Eigen::Index o = 0; o < s.out_channels; ++o) {
        double acc = 0.0;
        for (Eigen::Index q = 0; q < positions; ++q) acc += g(o, q);
        db(o) += acc;
      }
    }
    if (li == 0 && grad_input == nullptr) break;

    const double* p = parameters_.data() + offsets_[li];
    Eigen::Map<const RowMatrix> weight(p, s.out_channels, fan_in);
    const RowMatrix dcol = weight.transpose() * g;
    Tensor prev(in.channels, in.height, in.width);
    col2im(dcol, s, oh, ow, prev);
    grad = std::move(prev);
  }
  if (grad_input != nullptr) *grad_input = std::move(grad);
}

}  // namespace cloak::nn
