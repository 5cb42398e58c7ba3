// Copyright 2026 The crpslam Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "crpslam/network.hpp"
#include "crpslam/ops.hpp"
#include "test_util.hpp"

namespace crpslam::net {
namespace {

using testing::random_trajectory;
using testing::test_domain;

ForecasterConfig tiny_config() {
  ForecasterConfig c;
  c.noise_dim = 4;
  c.embed_dim = 8;
  c.channels = {4, 8};
  c.bottleneck_hidden = 8;
  return c;
}

class NetworkTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(41);
    trajectory = random_trajectory(domain, 4, rng);
    window = build_window(domain, trajectory, 1);
    params = init_params(config, domain, 7);
  }
  DomainSpec domain = test_domain();
  ForecasterConfig config = tiny_config();
  Trajectory trajectory;
  ModelInputWindow window;
  ForecasterParams<float> params;
};

std::vector<float> values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

TEST(ForecasterConfigTest, DefaultParameterCount) {
  const ForecasterConfig c;
  const DomainSpec d;
  std::size_t n = 0;
  for (const auto& [name, shape] : parameter_shapes(c, d)) n += shape_numel(shape);
  EXPECT_EQ(n, 483778u);
  EXPECT_EQ(init_params(c, d, 0).parameter_count(), n);
  EXPECT_EQ(c.noise_dim, 32u);
  EXPECT_EQ(c.depth(), 2u);
}

TEST(ForecasterConfigTest, FrameMustDivideByDepth) {
  ForecasterConfig c = tiny_config();
  DomainSpec d = test_domain(18, 5);
  EXPECT_THROW(c.validate(d), ConfigError);
  c.channels = {4, 0};
  EXPECT_THROW(c.validate(test_domain()), ConfigError);
}

TEST_F(NetworkTest, InitIsSeedDeterministic) {
  EXPECT_EQ(init_params(config, domain, 7).checksum(), params.checksum());
  EXPECT_NE(init_params(config, domain, 8).checksum(), params.checksum());
  EXPECT_EQ(params.checksum().size(), 16u);
  const auto shapes = parameter_shapes(config, domain);
  ASSERT_EQ(shapes.size(), params.tensors.size());
  for (const auto& [name, shape] : shapes) EXPECT_EQ(params.at(name).shape(), shape) << name;
  EXPECT_THROW((void)params.at("nope"), Error);
}

TEST_F(NetworkTest, CastRoundTripKeepsChecksum) {
  const auto back = params.cast<double>().cast<float>();
  EXPECT_EQ(back.checksum(), params.checksum());
}

TEST(SampleNoiseTest, Moments) {
  double sum = 0, sq = 0;
  std::size_t count = 0;
  for (std::size_t m = 0; m < 3125; ++m) {
    const auto z = sample_noise(99, 32, m, 0).z;
    for (float v : z) {
      sum += v;
      sq += static_cast<double>(v) * v;
      ++count;
    }
  }
  ASSERT_EQ(count, 100000u);
  const double mean = sum / count;
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(sq / count - mean * mean, 1.0, 0.03);
}

TEST(SampleNoiseTest, StreamsAreKeyedByMemberAndStep) {
  const auto a = sample_noise(5, 32, 2, 3);
  EXPECT_EQ(a.z, sample_noise(5, 32, 2, 3).z);
  EXPECT_EQ(a.member, 2u);
  EXPECT_EQ(a.step, 3u);
  EXPECT_NE(a.z, sample_noise(5, 32, 3, 3).z);
  EXPECT_NE(a.z, sample_noise(5, 32, 2, 4).z);
  EXPECT_NE(a.z, sample_noise(6, 32, 2, 3).z);
  const auto held = sample_noise(5, 32, 2, 3, NoiseMode::kPerMember);
  EXPECT_EQ(held.z, sample_noise(5, 32, 2, 0).z);
  EXPECT_EQ(held.step, 3u);
  EXPECT_EQ(sample_noise(5, 32, 2, 3, NoiseMode::kPerStep).z, a.z);
}

TEST_F(NetworkTest, EncodeNoiseZeroWeightsGiveZero) {
  const auto zero = zero_params(config, domain);
  const auto e = encode_noise(sample_noise(1, config.noise_dim, 0, 0), zero);
  ASSERT_EQ(e.shape(), (Shape{config.embed_dim}));
  for (float v : e.values()) EXPECT_EQ(v, 0.0f);
}

TEST_F(NetworkTest, EncodeNoiseIsAffineInZ) {
  const auto a = sample_noise(1, config.noise_dim, 0, 0);
  const auto b = sample_noise(2, config.noise_dim, 0, 0);
  NoiseVector sum_ab = a;
  for (std::size_t i = 0; i < a.z.size(); ++i) sum_ab.z[i] += b.z[i];
  auto& bias = params.tensors.at("noise.b");
  std::fill(bias.mutable_values().begin(), bias.mutable_values().end(), 0.0f);
  const auto ea = encode_noise(a, params), eb = encode_noise(b, params);
  const auto es = encode_noise(sum_ab, params);
  for (std::size_t i = 0; i < es.numel(); ++i) EXPECT_NEAR(es.at(i), ea.at(i) + eb.at(i), 1e-5);
}

TEST(EncodeNoiseTest, HandTwoByTwo) {
  ForecasterConfig c = tiny_config();
  c.noise_dim = 2;
  c.embed_dim = 2;
  auto p = zero_params(c, test_domain());
  p.tensors["noise.w"] = Tensor({2, 2}, {1, 2, 3, 4});
  p.tensors["noise.b"] = Tensor({2}, {0.5f, -0.5f});
  NoiseVector z{{1.0f, -1.0f}, 0, 0};
  const auto e = encode_noise(z, p);
  EXPECT_EQ(e.at(0), -0.5f);
  EXPECT_EQ(e.at(1), -1.5f);
}

TEST_F(NetworkTest, ZeroParametersPredictPersistence) {
  const auto zero = zero_params(config, domain);
  const auto out = forward(window, sample_noise(3, config.noise_dim, 0, 0), zero);
  ASSERT_EQ(out.shape(), (Shape{domain.state_vars, domain.interior_height(), domain.interior_width()}));
  EXPECT_EQ(values_of(out), values_of(window.current_interior));
}

TEST_F(NetworkTest, NoiseReachesOutput) {
  const auto a = forward(window, sample_noise(3, config.noise_dim, 0, 0), params);
  const auto b = forward(window, sample_noise(3, config.noise_dim, 1, 0), params);
  double linf = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) linf = std::max(linf, std::abs(double(a.at(i)) - b.at(i)));
  EXPECT_GT(linf, 0.0);
}

TEST_F(NetworkTest, EveryOutputChannelDependsOnZ) {
  const auto z = sample_noise(3, config.noise_dim, 0, 0);
  auto perturbed = z;
  perturbed.z[0] += 0.5f;
  const auto a = forward(window, z, params);
  const auto b = forward(window, perturbed, params);
  const std::size_t plane = domain.interior_cells();
  for (std::size_t c = 0; c < domain.state_vars; ++c) {
    bool changed = false;
    for (std::size_t i = 0; i < plane; ++i) changed = changed || a.at(c * plane + i) != b.at(c * plane + i);
    EXPECT_TRUE(changed) << "channel " << c;
  }
}

TEST_F(NetworkTest, ForwardIsDeterministic) {
  const auto z = sample_noise(3, config.noise_dim, 0, 0);
  EXPECT_EQ(values_of(forward(window, z, params)), values_of(forward(window, z, params)));
}

TEST_F(NetworkTest, EnsembleMatchesSequentialBitwise) {
  std::vector<NoiseVector> zs;
  for (std::size_t m = 0; m < 5; ++m) zs.push_back(sample_noise(11, config.noise_dim, m, 0));
  const auto batch = forward_ensemble(window, zs, params);
  ASSERT_EQ(batch.size(), zs.size());
  for (std::size_t m = 0; m < zs.size(); ++m) {
    EXPECT_EQ(values_of(batch[m]), values_of(forward(window, zs[m], params))) << "member " << m;
  }
  const auto single = forward_ensemble(window, {zs[2]}, params);
  EXPECT_EQ(values_of(single[0]), values_of(batch[2]));
}

TEST_F(NetworkTest, EnsemblePermutationPermutesOutputs) {
  std::vector<NoiseVector> zs;
  for (std::size_t m = 0; m < 4; ++m) zs.push_back(sample_noise(12, config.noise_dim, m, 0));
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<NoiseVector> permuted;
  for (auto i : perm) permuted.push_back(zs[i]);
  const auto a = forward_ensemble(window, zs, params);
  const auto b = forward_ensemble(window, permuted, params);
  for (std::size_t k = 0; k < perm.size(); ++k) EXPECT_EQ(values_of(b[k]), values_of(a[perm[k]]));
}

TEST_F(NetworkTest, TwentyFiveDistinctMembers) {
  std::vector<NoiseVector> zs;
  for (std::size_t m = 0; m < 25; ++m) zs.push_back(sample_noise(13, config.noise_dim, m, 0));
  const auto out = forward_ensemble(window, zs, params);
  std::set<std::vector<float>> distinct;
  for (const auto& o : out) distinct.insert(values_of(o));
  EXPECT_EQ(distinct.size(), 25u);
}

TEST_F(NetworkTest, EvaluationCounterCountsMembers) {
  EvaluationCounter::reset();
  (void)forward(window, sample_noise(1, config.noise_dim, 0, 0), params);
  EXPECT_EQ(EvaluationCounter::count(), 1u);
  std::vector<NoiseVector> zs;
  for (std::size_t m = 0; m < 6; ++m) zs.push_back(sample_noise(1, config.noise_dim, m, 0));
  (void)forward_ensemble(window, zs, params);
  EXPECT_EQ(EvaluationCounter::count(), 7u);
}

TEST_F(NetworkTest, GradientReachesNoiseEncoder) {
  auto p = params.detached(true);
  const auto out = forward(window, sample_noise(1, config.noise_dim, 0, 0), p);
  backward(mean(multiply(out, out)));
  double norm = 0;
  for (float g : p.at("noise.w").grad()) norm += double(g) * g;
  EXPECT_GT(norm, 0.0);
}

TEST_F(NetworkTest, NonFiniteActivationNamesLayer) {
  auto& w = params.tensors.at("in.w");
  w.mutable_values()[0] = std::numeric_limits<float>::infinity();
  try {
    (void)forward(window, sample_noise(1, config.noise_dim, 0, 0), params);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer in"), std::string::npos) << e.what();
  }
}

TEST_F(NetworkTest, GradientMatchesFiniteDifferencesOnProbes) {
  auto p = params.cast<double>(true);
  const auto w = build_window<double>(domain, trajectory, 1);
  const auto z = sample_noise(1, config.noise_dim, 0, 0);
  const auto loss = [&] {
    const auto out = forward(w, z, p);
    return mean(multiply(out, out));
  };
  backward(loss());
  Rng rng(42);
  const std::vector<std::string> names{"in.w", "noise.w", "mid.fc1.w", "out.w", "up0.b1.head.w"};
  for (const auto& name : names) {
    auto& t = p.tensors.at(name);
    const std::vector<double> grad(t.grad().begin(), t.grad().end());
    for (int probe = 0; probe < 4; ++probe) {
      const auto i = static_cast<std::size_t>(rng.below(t.numel()));
      const double fd = testing::central_difference([&] { return loss().item(); }, t, i, 1e-6);
      EXPECT_LT(testing::relative_error(grad[i], fd, 1e-7), 1e-3) << name << "[" << i << "]";
    }
  }
}

}  // namespace
}  // namespace crpslam::net
