// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fastprotect/datasets.hpp"
#include "fastprotect/errors.hpp"
#include "fastprotect/perceptual.hpp"
#include "test_support.hpp"

namespace fastprotect {
namespace {

using testing::default_encoder;
using testing::random_tensor;

PerceptualMap inverted_of(std::vector<double> values) {
  const std::size_t n = values.size();
  return {Tensor(1, 1, n, std::move(values)), MapStage::inverted};
}

TEST(ScalingParams, Defaults) {
  const ScalingParams p;
  EXPECT_DOUBLE_EQ(p.alpha_boost, 1.3);
  EXPECT_DOUBLE_EQ(p.beta, 0.91);
  EXPECT_EQ(p.c, 3);
  EXPECT_NEAR(p.max_multiplier(), 1.183, 1e-12);
  EXPECT_EQ(p.multipliers().size(), 10u);
}

TEST(ScalingParams, Validation) {
  EXPECT_THROW((ScalingParams{1.3, 1.0, 3}.validate()), ConfigError);
  EXPECT_THROW((ScalingParams{1.3, 0.0, 3}.validate()), ConfigError);
  EXPECT_THROW((ScalingParams{0.9, 0.91, 3}.validate()), ConfigError);
  EXPECT_THROW((ScalingParams{1.3, 0.91, 0}.validate()), ConfigError);
  EXPECT_THROW((ScalingParams{1.3, 0.91, 10}.validate()), ConfigError);
  EXPECT_NO_THROW(ScalingParams{}.validate());
}

TEST(Quantile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile({0, 10}, 0.25), 2.5);
  EXPECT_THROW(quantile({}, 0.5), ShapeError);
}

TEST(PerceptualMap, IdenticalInputsGiveZeroMap) {
  const Image x = synthetic::random_image(64, 3);
  const PerceptualMap m = perceptual_map(default_encoder(), x, x);
  EXPECT_EQ(m.stage, MapStage::raw);
  EXPECT_EQ(m.m.channels(), 1u);
  EXPECT_EQ(m.m.height(), 64u);
  EXPECT_EQ(m.m.width(), 64u);
  EXPECT_EQ(max_abs(m.m.data()), 0.0);
}

TEST(PerceptualMap, IsNonNegativeAndFollowsThePerturbation) {
  const Image x = synthetic::flat_image(128, 4);
  Tensor shifted = x.pixels();
  const Tensor noise = random_tensor(3, 128, 128, 9, -0.1, 0.1);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < 128; ++y) {
      for (std::size_t xx = 0; xx < 64; ++xx) shifted(c, y, xx) += noise(c, y, xx);
    }
  }
  const PerceptualMap m = perceptual_map(default_encoder(), x, Image::clamped(shifted));
  double left = 0.0;
  double right = 0.0;
  for (std::size_t y = 0; y < 128; ++y) {
    for (std::size_t xx = 0; xx < 128; ++xx) {
      EXPECT_GE(m.m(0, y, xx), 0.0);
      (xx < 64 ? left : right) += m.m(0, y, xx);
    }
  }
  EXPECT_GT(left, 2.0 * right);
}

TEST(PerceptualMap, HandlesSidesNotDivisibleByTheFactor) {
  const Image x = synthetic::random_image(100, 1);
  const Image y = Image::clamped(x.pixels() + Tensor(3, 100, 100, 0.02));
  const PerceptualMap m = perceptual_map(default_encoder(), x, y);
  EXPECT_EQ(m.m.height(), 100u);
  EXPECT_EQ(m.m.width(), 100u);
  EXPECT_THROW(perceptual_map(default_encoder(), x, synthetic::random_image(64, 1)), ShapeError);
}

TEST(NormalizeInvert, MinBecomesOneMaxBecomesZero) {
  Tensor t = random_tensor(1, 16, 16, 2, 0.0, 5.0);
  t(0, 3, 4) = -1.0;
  t(0, 7, 9) = 9.0;
  const PerceptualMap inv = normalize_invert({t, MapStage::raw});
  EXPECT_EQ(inv.stage, MapStage::inverted);
  EXPECT_DOUBLE_EQ(inv.m(0, 3, 4), 1.0);
  EXPECT_DOUBLE_EQ(inv.m(0, 7, 9), 0.0);
  for (double v : inv.m.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(NormalizeInvert, DegenerateMapBecomesOnes) {
  const PerceptualMap inv = normalize_invert({Tensor(1, 8, 8, 0.25), MapStage::raw});
  for (double v : inv.m.data()) EXPECT_EQ(v, 1.0);
}

TEST(NormalizeInvert, RejectsWrongStage) {
  EXPECT_THROW(normalize_invert({Tensor(1, 4, 4), MapStage::inverted}), ConfigError);
  EXPECT_THROW(decile_scale({Tensor(1, 4, 4), MapStage::raw}, ScalingParams{}), ConfigError);
}

TEST(DecileScale, TenValueOracle) {
  const PerceptualMap out = decile_scale(inverted_of({0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0}), {});
  const double expected[10] = {1.0, 1.1830, 1.0766, 0.7536, 0.6858, 0.6240, 0.5679, 0.5168, 0.4703, 0.4279};
  EXPECT_EQ(out.stage, MapStage::scaled);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(out.m(0, 0, i), expected[i], 1e-4) << "entry " << i;
}

TEST(DecileScale, ConstantMapIsAllOnes) {
  const PerceptualMap out = decile_scale(inverted_of(std::vector<double>(50, 0.3)), {});
  for (double v : out.m.data()) EXPECT_EQ(v, 1.0);
}

TEST(DecileScale, ValuesComeFromTheMultiplierSet) {
  const ScalingParams p;
  const auto allowed = p.multipliers();
  const Tensor t = random_tensor(1, 32, 32, 5);
  const PerceptualMap out = decile_scale({t, MapStage::inverted}, p);
  for (double v : out.m.data()) {
    EXPECT_TRUE(std::find(allowed.begin(), allowed.end(), v) != allowed.end()) << v;
    EXPECT_LE(v, p.max_multiplier());
  }
}

TEST(DecileScale, DependsOnlyOnRank) {
  const Tensor t = random_tensor(1, 32, 32, 6);
  Tensor cubed = t;
  for (double& v : cubed.data()) v = v * v * v;
  const PerceptualMap a = decile_scale({t, MapStage::inverted}, {});
  const PerceptualMap b = decile_scale({cubed, MapStage::inverted}, {});
  EXPECT_EQ(a.m, b.m);
}

TEST(DecileScale, DecaysWithLowerSensitivityBeyondTheBoost) {
  const ScalingParams p;
  const Tensor t = random_tensor(1, 40, 40, 7);
  const PerceptualMap out = decile_scale({t, MapStage::inverted}, p);
  const double unboosted = std::pow(p.beta, p.c);
  const auto v = t.data();
  const auto m = out.m.data();
  std::vector<std::size_t> order(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    const double lo = m[order[i - 1]];
    const double hi = m[order[i]];
    if (hi <= unboosted) {
      EXPECT_LE(lo, hi);
    }
  }
  // Roughly the top tenth keeps full strength.
  const auto ones = std::count(m.begin(), m.end(), 1.0);
  EXPECT_NEAR(static_cast<double>(ones) / static_cast<double>(m.size()), 0.1, 0.01);
}

TEST(ApplyStrength, OnesMapAddsThePerturbation) {
  const Image x = synthetic::random_image(64, 8);
  const Tensor delta = random_tensor(3, 64, 64, 9, -0.03, 0.03);
  const Image out = apply_strength(x, delta, {Tensor(1, 64, 64, 1.0), MapStage::scaled});
  EXPECT_EQ(out, Image::clamped(x.pixels() + delta));
}

TEST(ApplyStrength, ZeroMapIsIdentity) {
  const Image x = synthetic::random_image(64, 8);
  const Tensor delta = random_tensor(3, 64, 64, 9, -0.03, 0.03);
  EXPECT_EQ(apply_strength(x, delta, {Tensor(1, 64, 64, 0.0), MapStage::scaled}), x);
}

TEST(ApplyStrength, BoundedByTheLargestMultiplier) {
  const double eta = 8.0 / 255.0;
  const Image x = synthetic::random_image(64, 10);
  const Tensor delta = random_tensor(3, 64, 64, 11, -eta, eta);
  const PerceptualMap map = decile_scale({random_tensor(1, 64, 64, 12), MapStage::inverted}, {});
  const Image out = apply_strength(x, delta, map);
  EXPECT_LE(max_abs((out.pixels() - x.pixels()).data()), ScalingParams{}.max_multiplier() * eta + 1e-15);
}

TEST(ApplyStrength, ShapeChecks) {
  const Image x = synthetic::random_image(64, 8);
  EXPECT_THROW(apply_strength(x, Tensor(3, 32, 32), {Tensor(1, 64, 64, 1.0), MapStage::scaled}), ShapeError);
  EXPECT_THROW(apply_strength(x, Tensor(3, 64, 64), {Tensor(1, 32, 32, 1.0), MapStage::scaled}), ShapeError);
}

}  // namespace
}  // namespace fastprotect
