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

#include <cmath>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "cloak/errors.hpp"
#include "cloak/image_io.hpp"
#include "cloak/nn.hpp"
#include "cloak/optim.hpp"
#include "cloak/parallel.hpp"
#include "cloak/rng.hpp"
#include "test_util.hpp"

namespace cloak {
namespace {

using testing::TempDir;

TEST(QuantizeTest, ClampsRoundsAndIsIdempotent) {
  PixelGrid g(1, 2);
  const double in[6] = {-0.3, 1.7, 0.5, 0.1, 0.999, 1.0 / 255.0 * 0.49};
  std::copy(in, in + 6, g.values().begin());
  const PixelGrid q = quantize_8bit(g);
  EXPECT_EQ(q.values()[0], 0.0);
  EXPECT_EQ(q.values()[1], 1.0);
  EXPECT_EQ(q.values()[2], 128.0 / 255.0);
  EXPECT_EQ(q.values()[3], 26.0 / 255.0);
  EXPECT_EQ(q.values()[4], 1.0);
  EXPECT_EQ(q.values()[5], 0.0);
  EXPECT_EQ(quantize_8bit(q), q);
  const auto bytes = to_rgb8(g);
  EXPECT_EQ(from_rgb8(bytes, 1, 2), q);
  EXPECT_THROW(from_rgb8(bytes, 2, 2), DataError);
}

TEST(PngTest, RoundTripMatchesQuantization) {
  TempDir dir;
  const PixelGrid g = testing::random_grid(17, 23, 5, -0.1, 1.1);
  write_png(dir / "g.png", g);
  const PixelGrid back = read_png(dir / "g.png");
  EXPECT_EQ(back, quantize_8bit(g));
  EXPECT_EQ(read_image(dir / "g.png"), back);
  EXPECT_THROW(read_png(dir / "none.png"), MissingFileError);
  std::ofstream(dir / "junk.png") << "not a png";
  EXPECT_THROW(read_png(dir / "junk.png"), DataError);
  EXPECT_THROW(read_image(dir / "none.jpg"), MissingFileError);
}

TEST(Sha256Test, KnownVectors) {
  EXPECT_EQ(sha256_hex(std::string("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(std::string()),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  TempDir dir;
  std::ofstream(dir / "abc.txt") << "abc";
  EXPECT_EQ(sha256_file(dir / "abc.txt"), sha256_hex(std::string("abc")));
}

TEST(PatchFileTest, SidecarRoundTrip) {
  TempDir dir;
  Patch p;
  p.pixels = testing::random_grid(6, 9, 2);
  p.meta = {"cafe", 77, "2026-01-01T00:00:00Z"};
  save_patch(dir / "p.png", p);
  EXPECT_TRUE(std::filesystem::exists(dir / "p.json"));
  const Patch q = load_patch(dir / "p.png");
  EXPECT_EQ(q.pixels, quantize_8bit(p.pixels));
  EXPECT_EQ(q.meta.config_hash, "cafe");
  EXPECT_EQ(q.meta.seed, 77u);
  EXPECT_EQ(q.meta.created_at, "2026-01-01T00:00:00Z");

  std::ofstream(dir / "p.json") << R"({"height": 7, "width": 9})";
  EXPECT_THROW(load_patch(dir / "p.png"), DataError);
  std::filesystem::remove(dir / "p.json");
  EXPECT_EQ(load_patch(dir / "p.png").meta.seed, 0u);
}

TEST(JpegTest, QualityOrdersError) {
  const PixelGrid g = testing::random_grid(32, 32, 9);
  auto err = [&](int q) {
    const PixelGrid r = jpeg_roundtrip(g, q);
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) s += std::abs(r.values()[i] - g.values()[i]);
    return s / static_cast<double>(r.size());
  };
  EXPECT_LT(err(95), err(50));
  EXPECT_LT(err(50), err(10));
  EXPECT_EQ(jpeg_roundtrip(g, 50), jpeg_roundtrip(g, 50));
}

TEST(RngTest, DeterministicStreams) {
  Rng a(3), b(3), c(4);
  for (int i = 0; i < 10; ++i) {
    const double va = a.uniform();
    EXPECT_EQ(va, b.uniform());
    EXPECT_GE(va, 0.0);
    EXPECT_LT(va, 1.0);
  }
  EXPECT_NE(Rng(3).next(), c.next());
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  std::set<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < 100; ++i) seeds.insert(derive_seed(1, {i}));
  seeds.insert(derive_seed(1, {2, 0}));
  EXPECT_EQ(seeds.size(), 101u);
}

TEST(RngTest, IndexIsUniformAndInRange) {
  Rng rng(1);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) {
    const auto k = rng.index(5);
    ASSERT_LT(k, 5u);
    ++counts[k];
  }
  for (int c : counts) EXPECT_NEAR(c, 10000, 400);
}

TEST(ParallelTest, EveryIndexOnce) {
  for (int jobs : {1, 3, 8}) {
    std::vector<int> hits(37, 0);
    parallel_for(hits.size(), jobs, [&](std::size_t i) { ++hits[i]; });
    for (int h : hits) EXPECT_EQ(h, 1);
  }
}

TEST(AdamTest, ClosedFormFirstSteps) {
  Adam adam(2, 0.1);
  std::vector<double> p = {1.0, -2.0};
  const std::vector<double> g1 = {0.5, -3.0};
  adam.step(p, g1);
  // First bias-corrected step is lr * g / (|g| + eps).
  EXPECT_NEAR(p[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], -2.0 + 0.1 * 3.0 / (3.0 + 1e-8), 1e-15);
  const double p0 = p[0];

  const std::vector<double> g2 = {1.0, 0.0};
  adam.step(p, g2);
  const double m = (0.9 * 0.1 * 0.5 + 0.1 * 1.0) / (1 - 0.81);
  const double v = (0.999 * 0.001 * 0.25 + 0.001 * 1.0) / (1 - 0.999 * 0.999);
  EXPECT_NEAR(p[0], p0 - 0.1 * m / (std::sqrt(v) + 1e-8), 1e-12);
  EXPECT_EQ(adam.steps(), 2u);
  std::vector<double> wrong(3);
  EXPECT_THROW(adam.step(wrong, g1), ConfigError);
}

TEST(AdamTest, RestoreContinuesIdentically) {
  Adam a(3, 0.05);
  std::vector<double> pa = {0.1, 0.2, 0.3};
  const std::vector<double> g = {1.0, -1.0, 0.5};
  a.step(pa, g);
  Adam b(3, 0.05);
  b.restore({a.first_moment().begin(), a.first_moment().end()},
            {a.second_moment().begin(), a.second_moment().end()}, a.steps());
  std::vector<double> pb = pa;
  a.step(pa, g);
  b.step(pb, g);
  EXPECT_EQ(pa, pb);
  EXPECT_THROW(b.restore({1.0}, {1.0}, 1), ConfigError);
}

TEST(StepDecayTest, Oracles) {
  EXPECT_DOUBLE_EQ(step_decay(0.1, 0, 10, 0.5), 0.1);
  EXPECT_DOUBLE_EQ(step_decay(0.1, 9, 10, 0.5), 0.1);
  EXPECT_DOUBLE_EQ(step_decay(0.1, 10, 10, 0.5), 0.05);
  EXPECT_DOUBLE_EQ(step_decay(0.1, 25, 10, 0.5), 0.025);
  EXPECT_DOUBLE_EQ(step_decay(0.1, 25, 0, 0.5), 0.1);
}

class ConvNetTest : public ::testing::Test {
 protected:
  ConvNetTest()
      : net_({{2, 3, 3, 2, 1}, {3, 4, 3, 1, 1}, {4, 2, 1, 1, 0}}) {
    net_.initialize(5);
    Rng rng(8);
    for (double& b : net_.parameters()) b += 0.05 * rng.normal();
    input_ = nn::Tensor(2, 7, 6);
    for (double& v : input_.data) v = rng.uniform(-1.0, 1.0);
    weights_.resize(2 * 4 * 3);
    for (double& w : weights_) w = rng.uniform(-1.0, 1.0);
  }

  double objective(const nn::ConvNet& net, const nn::Tensor& in) const {
    const nn::Tensor out = net.forward(in);
    double s = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) s += weights_[i] * out.data[i];
    return s;
  }

  nn::ConvNet net_;
  nn::Tensor input_;
  std::vector<double> weights_;
};

TEST_F(ConvNetTest, ShapesFollowStrideAndPadding) {
  EXPECT_EQ(net_.output_size(7, 6), std::make_pair(4, 3));
  const nn::Tensor out = net_.forward(input_);
  EXPECT_EQ(out.channels, 2);
  EXPECT_EQ(out.height, 4);
  EXPECT_EQ(out.width, 3);
  EXPECT_EQ(net_.parameter_count(), 2u * 3 * 9 + 3 + 3u * 4 * 9 + 4 + 4u * 2 + 2);
  EXPECT_EQ(net_.bias(2).size(), 2u);
}

TEST_F(ConvNetTest, InitializationIsSeeded) {
  nn::ConvNet a(net_.layers()), b(net_.layers()), c(net_.layers());
  a.initialize(1);
  b.initialize(1);
  c.initialize(2);
  EXPECT_TRUE(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  EXPECT_FALSE(std::equal(a.parameters().begin(), a.parameters().end(), c.parameters().begin()));
  for (double v : a.bias(0)) EXPECT_EQ(v, 0.0);
}

TEST_F(ConvNetTest, BackwardMatchesFiniteDifferences) {
  nn::ConvNet::Workspace ws;
  const nn::Tensor out = net_.forward(input_, &ws);
  nn::Tensor g(out.channels, out.height, out.width);
  g.data = weights_;
  std::vector<double> pgrad(net_.parameter_count(), 0.0);
  nn::Tensor igrad;
  net_.backward(ws, input_, g, pgrad, &igrad);

  const double h = 1e-6;
  for (std::size_t i = 0; i < net_.parameter_count(); i += 7) {
    nn::ConvNet plus = net_, minus = net_;
    plus.parameters()[i] += h;
    minus.parameters()[i] -= h;
    const double fd = (objective(plus, input_) - objective(minus, input_)) / (2 * h);
    EXPECT_NEAR(pgrad[i], fd, 1e-7 + 1e-6 * std::abs(fd)) << "param " << i;
  }
  for (std::size_t i = 0; i < input_.data.size(); i += 5) {
    nn::Tensor plus = input_, minus = input_;
    plus.data[i] += h;
    minus.data[i] -= h;
    const double fd = (objective(net_, plus) - objective(net_, minus)) / (2 * h);
    EXPECT_NEAR(igrad.data[i], fd, 1e-7 + 1e-6 * std::abs(fd)) << "input " << i;
  }
}

TEST_F(ConvNetTest, BackwardAccumulates) {
  nn::ConvNet::Workspace ws;
  const nn::Tensor out = net_.forward(input_, &ws);
  nn::Tensor g(out.channels, out.height, out.width);
  g.data = weights_;
  std::vector<double> once(net_.parameter_count(), 0.0), twice(net_.parameter_count(), 0.0);
  net_.backward(ws, input_, g, once, nullptr);
  net_.backward(ws, input_, g, twice, nullptr);
  net_.backward(ws, input_, g, twice, nullptr);
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_NEAR(twice[i], 2 * once[i], 1e-12);
}

TEST_F(ConvNetTest, TooSmallInputRejected) {
  nn::ConvNet big({{2, 2, 5, 1, 0}});
  EXPECT_THROW(big.forward(nn::Tensor(2, 3, 3)), InputError);
}

}  // namespace
}  // namespace cloak
