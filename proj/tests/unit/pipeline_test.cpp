// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <array>
#include <fstream>
#include <vector>

#include <gtest/gtest.h>

#include "fastprotect/assignment.hpp"
#include "fastprotect/datasets.hpp"
#include "fastprotect/errors.hpp"
#include "fastprotect/pipeline.hpp"
#include "fastprotect/targets.hpp"
#include "test_support.hpp"

namespace fastprotect {
namespace {

using testing::default_encoder;
using testing::random_tensor;

constexpr int kEta = 8;

const std::array<TargetSpec, 3>& targets_512() {
  static const auto t = make_targets(default_encoder(), 0);
  return t;
}

CentroidSet two_centroids(std::size_t side) {
  std::vector<LatentCode> latents;
  for (std::uint64_t s = 0; s < 6; ++s) latents.push_back(default_encoder().encode(synthetic::random_image(side, s)).latent);
  return fit_assignment(latents, 2, 0);
}

// A model with random float-grid perturbations that fill the half budgets.
MoPModel random_model(std::size_t side) {
  MoPModel m = zero_model(default_encoder(), targets_512(), two_centroids(side), kEta, side);
  std::uint64_t seed = 100;
  for (auto& bank : m.banks) {
    const double b = bank.delta_g.bound;
    bank.delta_g.values = random_tensor(3, side, side, seed++, -b, b);
    round_to_float(bank.delta_g.values.data());
    for (auto& d : bank.deltas) {
      d.values = random_tensor(3, side, side, seed++, -b, b);
      round_to_float(d.values.data());
    }
  }
  return m;
}

const MoPModel& model_512() {
  static const MoPModel m = random_model(512);
  return m;
}

double linf(const Image& a, const Image& b) { return max_abs((a.pixels() - b.pixels()).data()); }

TEST(Protect, NonAdaptiveAtBaseResolutionAddsTheComponent) {
  const Image x = synthetic::random_image(512, 1);
  ProtectOptions opts;
  opts.adaptive_strength = false;
  const ProtectionResult r = protect(default_encoder(), model_512(), x, opts);
  const Encoding enc = default_encoder().encode(x);
  EXPECT_EQ(r.cluster, assign(enc.latent, model_512().centroids));
  EXPECT_EQ(r.target, select_target(enc.latent, targets_512()));
  EXPECT_EQ(r.protected_image, Image::clamped(x.pixels() + model_512().bank(r.target).combined(r.cluster)));
  EXPECT_LE(r.effective_linf, kEta / 255.0);
  EXPECT_EQ(r.effective_linf, linf(r.protected_image, x));
}

TEST(Protect, ZeroModelIsIdentity) {
  const MoPModel zero = zero_model(default_encoder(), targets_512(), two_centroids(512), kEta, 512);
  const Image x = synthetic::random_image(512, 2);
  for (bool adaptive : {false, true}) {
    ProtectOptions opts;
    opts.adaptive_strength = adaptive;
    const ProtectionResult r = protect(default_encoder(), zero, x, opts);
    EXPECT_EQ(r.protected_image, x);
    EXPECT_EQ(r.effective_linf, 0.0);
  }
}

TEST(Protect, BudgetHoldsAtOtherResolutions) {
  const Image x = synthetic::random_image(1024, 3);
  ProtectOptions fixed;
  fixed.adaptive_strength = false;
  const ProtectionResult a = protect(default_encoder(), model_512(), x, fixed);
  EXPECT_LE(a.effective_linf, kEta / 255.0);
  const ProtectionResult b = protect(default_encoder(), model_512(), x);
  EXPECT_LE(b.effective_linf, ScalingParams{}.max_multiplier() * kEta / 255.0 + 1e-12);
  EXPECT_EQ(a.protected_image.height(), 1024u);
  EXPECT_EQ(b.protected_image.width(), 1024u);
}

TEST(Protect, OutputKeepsInputShape) {
  const Image x(random_tensor(3, 96, 160, 4), "odd");
  const ProtectionResult r = protect(default_encoder(), model_512(), x);
  EXPECT_EQ(r.protected_image.height(), 96u);
  EXPECT_EQ(r.protected_image.width(), 160u);
  EXPECT_EQ(r.protected_image.id(), "odd");
}

TEST(Protect, UsesTwoForwardPassesAtBaseResolution) {
  const Image x = synthetic::random_image(512, 5);
  const MoPModel& m = model_512();
  default_encoder().reset_counters();
  protect(default_encoder(), m, x);
  EXPECT_EQ(default_encoder().forward_count(), 2u);
  default_encoder().reset_counters();
  ProtectOptions fixed;
  fixed.adaptive_strength = false;
  protect(default_encoder(), m, x, fixed);
  EXPECT_EQ(default_encoder().forward_count(), 1u);
}

TEST(Protect, SelectionAndAssignmentUseTheBaseResolution) {
  const Image x = synthetic::random_image(1024, 6);
  const MoPModel& m = model_512();
  default_encoder().reset_counters();
  const ProtectionResult r = protect(default_encoder(), m, x);
  EXPECT_EQ(default_encoder().forward_count_at(512, 512), 1u);
  const Encoding enc = default_encoder().encode(resize_image(x, 512, 512));
  EXPECT_EQ(r.cluster, assign(enc.latent, model_512().centroids));
}

TEST(Protect, IsDeterministic) {
  const Image x = synthetic::random_image(512, 7);
  const auto a = protect(default_encoder(), model_512(), x);
  const auto b = protect(default_encoder(), model_512(), x);
  EXPECT_EQ(a.protected_image, b.protected_image);
  EXPECT_EQ(a.cluster, b.cluster);
  EXPECT_EQ(a.target, b.target);
}

TEST(Protect, OptionsAreHonoured) {
  const Image x = synthetic::random_image(512, 8);
  ProtectOptions opts;
  opts.fixed_target = TargetLevel::high;
  opts.fixed_cluster = 1;
  opts.keep_map = true;
  const auto r = protect(default_encoder(), model_512(), x, opts);
  EXPECT_EQ(r.target, TargetLevel::high);
  EXPECT_EQ(r.cluster, 1);
  ASSERT_TRUE(r.map.has_value());
  EXPECT_EQ(r.map->stage, MapStage::scaled);
  EXPECT_EQ(r.map->m.height(), 512u);
  opts.fixed_cluster = 2;
  EXPECT_THROW(protect(default_encoder(), model_512(), x, opts), ConfigError);
}

TEST(Protect, RejectsBadInputs) {
  EXPECT_THROW(protect(default_encoder(), model_512(), Image(random_tensor(3, 48, 128, 1))), InputError);
  EncoderConfig other;
  other.seed = 77;
  EXPECT_THROW(protect(ConvEncoder(other), model_512(), synthetic::random_image(512, 1)), CompatibilityError);
}

TEST(Protect, SmoothRegionsReceiveLessPerturbation) {
  const MoPModel m = random_model(256);
  int favourable = 0;
  constexpr int kCases = 5;
  for (std::uint64_t seed = 0; seed < kCases; ++seed) {
    const Image x = synthetic::flat_textured_image(256, seed);
    const auto r = protect(default_encoder(), m, x);
    double flat = 0.0;
    double textured = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < 256; ++y) {
        for (std::size_t xx = 0; xx < 256; ++xx) {
          const double d = std::abs(r.protected_image.pixels()(c, y, xx) - x.pixels()(c, y, xx));
          (xx < 128 ? flat : textured) += d;
        }
      }
    }
    if (flat < textured) ++favourable;
  }
  EXPECT_GE(favourable, 4);
}

TEST(ProtectBatch, MatchesSingleCallsInAnyOrder) {
  std::vector<Image> xs;
  for (std::uint64_t s = 0; s < 4; ++s) xs.push_back(synthetic::random_image(256, 20 + s));
  const MoPModel m = random_model(256);
  const auto batch = protect_batch(default_encoder(), m, xs);
  ASSERT_EQ(batch.size(), xs.size());
  std::vector<Image> reversed(xs.rbegin(), xs.rend());
  const auto back = protect_batch(default_encoder(), m, reversed);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    ASSERT_TRUE(batch[i].ok());
    EXPECT_EQ(batch[i].id, xs[i].id());
    EXPECT_EQ(batch[i].result->protected_image, protect(default_encoder(), m, xs[i]).protected_image);
    EXPECT_EQ(batch[i].result->protected_image, back[xs.size() - 1 - i].result->protected_image);
  }
}

TEST(ProtectFiles, RecordsFailuresAndContinues) {
  testing::TempDir dir;
  const MoPModel m = random_model(256);
  save_image(synthetic::random_image(256, 1), dir / "a.png");
  {
    std::ofstream junk(dir / "b.png", std::ios::binary);
    junk << "not an image";
  }
  save_image(synthetic::random_image(256, 2), dir / "c.png");
  const std::vector<std::filesystem::path> paths = {dir / "a.png", dir / "b.png", dir / "c.png", dir / "d.png"};
  const auto out = protect_files(default_encoder(), m, paths);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_TRUE(out[0].ok());
  EXPECT_FALSE(out[1].ok());
  EXPECT_FALSE(out[1].error.empty());
  EXPECT_TRUE(out[2].ok());
  EXPECT_FALSE(out[3].ok());
}

}  // namespace
}  // namespace fastprotect
