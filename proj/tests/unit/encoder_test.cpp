// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <numeric>

#include <gtest/gtest.h>

#include "fastprotect/encoder.hpp"
#include "fastprotect/errors.hpp"
#include "test_support.hpp"

namespace fastprotect {
namespace {

using testing::default_encoder;
using testing::random_tensor;

OutputGradient sum_latent(const LatentCode& z, const FeaturePyramid&) {
  OutputGradient g;
  const auto v = z.z.data();
  g.value = std::accumulate(v.begin(), v.end(), 0.0);
  g.latent = Tensor(z.z.channels(), z.z.height(), z.z.width(), 1.0);
  return g;
}

TEST(Encoder, DefaultShapesAt512) {
  const Encoding e = default_encoder().encode(Tensor(3, 512, 512, 0.5));
  EXPECT_EQ(e.latent.z.channels(), 4u);
  EXPECT_EQ(e.latent.z.height(), 64u);
  EXPECT_EQ(e.latent.z.width(), 64u);
  ASSERT_EQ(e.pyramid.names(), (std::vector<std::string>{"down_1", "down_2", "down_3", "mid_0"}));
  EXPECT_EQ(e.pyramid.layers[0].feature.height(), 256u);
  EXPECT_EQ(e.pyramid.layers[2].feature.height(), 64u);
  EXPECT_EQ(e.pyramid.layers[3].feature.height(), 64u);
}

TEST(Encoder, Deterministic) {
  const Tensor x = random_tensor(3, 64, 64, 1);
  const Encoding a = default_encoder().encode(x);
  const Encoding b = default_encoder().encode(x);
  EXPECT_EQ(a.latent.z, b.latent.z);
  for (std::size_t l = 0; l < a.pyramid.layers.size(); ++l) {
    EXPECT_EQ(a.pyramid.layers[l].feature, b.pyramid.layers[l].feature);
  }
  const ConvEncoder again(EncoderConfig{});
  EXPECT_EQ(again.encode(x).latent.z, a.latent.z);
}

TEST(Encoder, IndivisibleSizeIsShapeError) {
  EXPECT_THROW(default_encoder().encode(Tensor(3, 511, 512, 0.5)), ShapeError);
  EXPECT_THROW(default_encoder().encode(Tensor(1, 64, 64, 0.5)), ShapeError);
}

TEST(Encoder, ShapeCovariance) {
  const Encoding a = default_encoder().encode(Tensor(3, 64, 64, 0.3));
  const Encoding b = default_encoder().encode(Tensor(3, 128, 128, 0.3));
  EXPECT_EQ(b.latent.z.height(), 2 * a.latent.z.height());
  for (std::size_t l = 0; l < a.pyramid.layers.size(); ++l) {
    EXPECT_EQ(b.pyramid.layers[l].feature.height(), 2 * a.pyramid.layers[l].feature.height());
    EXPECT_EQ(b.pyramid.layers[l].feature.width(), 2 * a.pyramid.layers[l].feature.width());
  }
}

TEST(Encoder, ConfigValidation) {
  EncoderConfig c;
  c.downsample_factor = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.num_stages = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(ConvEncoder(EncoderConfig{0, 4, 0, 4, 8}), ConfigError);
}

TEST(Encoder, FingerprintIdentity) {
  EncoderConfig one;
  one.seed = 1;
  EncoderConfig two;
  two.seed = 2;
  EXPECT_EQ(encoder_fingerprint(one), encoder_fingerprint(one));
  EXPECT_NE(encoder_fingerprint(one), encoder_fingerprint(two));
  EXPECT_EQ(ConvEncoder(one).fingerprint(), encoder_fingerprint(one));
  EXPECT_EQ(encoder_fingerprint(one).size(), 64u);
}

TEST(Encoder, ZeroLossGivesZeroGradient) {
  const Tensor x = random_tensor(3, 64, 64, 2);
  const auto vg = default_encoder().value_and_gradient(x, [](const LatentCode&, const FeaturePyramid&) {
    return OutputGradient{};
  });
  EXPECT_EQ(vg.value, 0.0);
  EXPECT_EQ(max_abs(vg.gradient.data()), 0.0);
}

TEST(Encoder, SumLatentGradientMatchesFiniteDifferences) {
  const ConvEncoder& enc = default_encoder();
  const Tensor x = random_tensor(3, 64, 64, 3, 0.1, 0.9);
  const Tensor g = enc.value_and_gradient(x, sum_latent).gradient;
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  const double h = 1e-3;
  for (int probe = 0; probe < 10; ++probe) {
    const std::size_t i = pick(rng);
    Tensor plus = x;
    Tensor minus = x;
    plus.data()[i] += h;
    minus.data()[i] -= h;
    const double fd =
        (sum_latent(enc.encode(plus).latent, {}).value - sum_latent(enc.encode(minus).latent, {}).value) / (2 * h);
    const double rel = std::abs(g.data()[i] - fd) / std::max(std::abs(fd), 1e-12);
    EXPECT_LT(rel, 1e-3) << "pixel " << i << " analytic " << g.data()[i] << " fd " << fd;
  }
}

TEST(Encoder, NonFiniteGradientNamesLayer) {
  const Tensor x = random_tensor(3, 64, 64, 4);
  const auto nan_loss = [](const LatentCode& z, const FeaturePyramid&) {
    OutputGradient g;
    g.latent = Tensor(z.z.channels(), z.z.height(), z.z.width(), std::numeric_limits<double>::quiet_NaN());
    return g;
  };
  try {
    default_encoder().value_and_gradient(x, nan_loss);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.where(), "latent");
  }
}

TEST(Encoder, CountsForwardPassesPerSize) {
  const ConvEncoder enc(EncoderConfig{});
  enc.encode(Tensor(3, 64, 64, 0.5));
  enc.encode(Tensor(3, 64, 64, 0.5));
  enc.value_and_gradient(Tensor(3, 128, 64, 0.5), sum_latent);
  EXPECT_EQ(enc.forward_count(), 3u);
  EXPECT_EQ(enc.forward_count_at(64, 64), 2u);
  EXPECT_EQ(enc.forward_count_at(128, 64), 1u);
  enc.reset_counters();
  EXPECT_EQ(enc.forward_count(), 0u);
}

}  // namespace
}  // namespace fastprotect
