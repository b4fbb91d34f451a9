// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fastprotect/ablation.hpp"
#include "fastprotect/assignment.hpp"
#include "fastprotect/bench.hpp"
#include "fastprotect/countermeasure.hpp"
#include "fastprotect/datasets.hpp"
#include "fastprotect/errors.hpp"
#include "fastprotect/metrics.hpp"
#include "fastprotect/targets.hpp"
#include "test_support.hpp"

namespace fastprotect {
namespace {

using testing::default_encoder;
using testing::random_tensor;

TEST(Psnr, UniformOffsetOracle) {
  const Image a(Tensor(3, 64, 64, 0.5));
  const Image b(Tensor(3, 64, 64, 0.5 + 8.0 / 255.0));
  EXPECT_NEAR(psnr(a, b), 20.0 * std::log10(255.0 / 8.0), 1e-9);
  EXPECT_NEAR(psnr(a, b), 30.07, 0.01);
  EXPECT_EQ(psnr(a, a), std::numeric_limits<double>::infinity());
  EXPECT_THROW(psnr(a, Image(Tensor(3, 64, 128, 0.5))), ShapeError);
}

TEST(Measure, IdenticalImagesHaveUnitRatio) {
  const Image x = synthetic::random_image(64, 1);
  const LatentCode z = default_encoder().encode(synthetic::random_image(64, 2)).latent;
  const MetricsReport r = measure(default_encoder(), Original{x}, Protected{x}, z);
  EXPECT_EQ(r.linf, 0.0);
  EXPECT_EQ(r.mean_abs_delta, 0.0);
  EXPECT_EQ(r.latent_shift_ratio, 1.0);
  EXPECT_EQ(r.protection_proxy, 0.0);
  EXPECT_TRUE(std::isinf(r.psnr));
}

TEST(Measure, RatioOracle) {
  const Image x = synthetic::random_image(64, 3);
  const Image y = Image::clamped(x.pixels() + random_tensor(3, 64, 64, 4, -0.03, 0.03));
  const LatentCode z = default_encoder().encode(synthetic::random_image(64, 5)).latent;
  const MetricsReport r = measure(default_encoder(), Original{x}, Protected{y}, z);
  const Tensor zx = default_encoder().encode(x).latent.z;
  const Tensor zy = default_encoder().encode(y).latent.z;
  const double expected =
      std::sqrt(squared_distance(zy.data(), z.z.data())) / std::sqrt(squared_distance(zx.data(), z.z.data()));
  EXPECT_DOUBLE_EQ(r.latent_shift_ratio, expected);
  EXPECT_DOUBLE_EQ(r.protection_proxy, 1.0 - expected);
  EXPECT_NEAR(r.linf, max_abs((y.pixels() - x.pixels()).data()), 0.0);
}

TEST(Measure, EncodesAtTheTargetResolution) {
  const Image x = synthetic::random_image(128, 6);
  const Image y = Image::clamped(x.pixels() + Tensor(3, 128, 128, 0.01));
  const LatentCode z = default_encoder().encode(synthetic::random_image(64, 7)).latent;
  default_encoder().reset_counters();
  measure(default_encoder(), Original{x}, Protected{y}, z);
  EXPECT_EQ(default_encoder().forward_count_at(64, 64), 2u);
  EXPECT_EQ(default_encoder().forward_count_at(128, 128), 0u);
}

TEST(Countermeasure, ParseAndFormat) {
  EXPECT_EQ(Countermeasure::parse("jpeg:75").to_string(), "jpeg:75");
  EXPECT_EQ(Countermeasure::parse("noise:0.01").to_string(), "noise:0.01");
  EXPECT_EQ(Countermeasure::parse("gaussian_noise:0.5").kind, Countermeasure::Kind::gaussian_noise);
  EXPECT_EQ(Countermeasure::parse("resize:0.5").to_string(), "resize:0.5");
  EXPECT_EQ(Countermeasure::parse("resize_roundtrip:0.25").kind, Countermeasure::Kind::resize_roundtrip);
  for (const char* bad : {"jpeg", "jpeg:0", "jpeg:101", "jpeg:7.5", "noise:-1", "resize:0", "resize:1.5", "blur:2",
                          "jpeg:abc"}) {
    EXPECT_THROW(Countermeasure::parse(bad), ConfigError) << bad;
  }
}

TEST(Countermeasure, IdentityCases) {
  const Image x = synthetic::random_image(64, 8);
  EXPECT_EQ(apply_countermeasure(x, Countermeasure::gaussian_noise(0.0), 1), x);
  EXPECT_EQ(apply_countermeasure(x, Countermeasure::resize_roundtrip(1.0), 1), x);
}

TEST(Countermeasure, JpegQualityOrdersFidelity) {
  const Image x = synthetic::textured_image(128, 9);
  const double q100 = psnr(x, apply_countermeasure(x, Countermeasure::jpeg(100), 0));
  const double q50 = psnr(x, apply_countermeasure(x, Countermeasure::jpeg(50), 0));
  EXPECT_GT(q100, q50);
}

TEST(Countermeasure, NoiseIsSeededAndInRange) {
  const Image x = synthetic::random_image(64, 10);
  const auto cm = Countermeasure::gaussian_noise(0.05);
  const Image a = apply_countermeasure(x, cm, 3);
  EXPECT_EQ(a, apply_countermeasure(x, cm, 3));
  EXPECT_FALSE(a == apply_countermeasure(x, cm, 4));
  for (double v : a.pixels().data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Countermeasure, ResizeKeepsShape) {
  const Image x = synthetic::random_image(128, 11);
  const Image y = apply_countermeasure(x, Countermeasure::resize_roundtrip(0.5), 0);
  EXPECT_EQ(y.height(), 128u);
  EXPECT_EQ(y.width(), 128u);
  EXPECT_FALSE(y == x);
}

TEST(Median, OddAndEven) {
  EXPECT_DOUBLE_EQ(median({3, 1, 2}), 2.0);
  EXPECT_DOUBLE_EQ(median({4, 1, 3, 2}), 2.5);
}

MoPModel small_zero_model() {
  const auto targets = testing::targets_at(64);
  std::vector<LatentCode> latents;
  for (std::uint64_t s = 0; s < 4; ++s) latents.push_back(default_encoder().encode(synthetic::random_image(64, s)).latent);
  return zero_model(default_encoder(), targets, fit_assignment(latents, 1, 0), 8, 64);
}

TEST(Bench, OneRowPerSizeAndCsv) {
  BenchConfig cfg;
  cfg.sizes = {64, 128};
  cfg.pgd.pgd_steps = 2;
  const auto rows = bench_latency(default_encoder(), small_zero_model(), cfg);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_GT(r.protect_ms, 0.0);
    EXPECT_GT(r.pgd_ms, 0.0);
    EXPECT_DOUBLE_EQ(r.speedup, r.pgd_ms / r.protect_ms);
  }
  std::ostringstream csv;
  write_bench_csv(rows, csv);
  std::istringstream in(csv.str());
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0], "size,protect_ms,pgd_ms,speedup");
  EXPECT_EQ(lines[1].rfind("64,", 0), 0u);
}

TEST(Bench, Validation) {
  BenchConfig cfg;
  cfg.repetitions = 4;
  EXPECT_THROW(cfg.validate(8), ConfigError);
  cfg = BenchConfig{};
  cfg.sizes = {100};
  EXPECT_THROW(cfg.validate(8), ConfigError);
  cfg.sizes = {32};
  EXPECT_THROW(cfg.validate(8), ConfigError);
  EXPECT_NO_THROW(BenchConfig{}.validate(8));
}

TEST(StepsToThreshold, FirstReachingIndex) {
  const std::vector<double> losses = {1.0, 2.0, 3.0, 2.5, 4.0};
  EXPECT_EQ(steps_to_threshold(losses, 0.5), 0);
  EXPECT_EQ(steps_to_threshold(losses, 2.6), 2);
  EXPECT_EQ(steps_to_threshold(losses, 4.0), 4);
  EXPECT_EQ(steps_to_threshold(losses, 5.0), 5);
}

AblationConfig tiny_ablation() {
  AblationConfig cfg;
  cfg.seeds = {0};
  cfg.train_images = 8;
  cfg.holdout_images = 4;
  cfg.clusters = 2;
  cfg.train.steps = 2;
  cfg.train.batch_size = 2;
  cfg.train.k = 2;
  return cfg;
}

TEST(Ablation, KSweepHasOneArmPerK) {
  const AblationReport r = run_ablation("k_sweep", default_encoder(), tiny_ablation());
  ASSERT_EQ(r.arms.size(), 4u);
  EXPECT_EQ(r.arms[0].name, "k=1");
  EXPECT_EQ(r.arms[3].name, "k=8");
  for (const auto& arm : r.arms) {
    EXPECT_EQ(arm.proxy.size(), 1u);
    EXPECT_EQ(arm.train_loss.size(), 1u);
  }
  EXPECT_EQ(r.verdicts.count("largest_k_beats_smallest_k"), 1u);
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j.at("ablation"), "k_sweep");
  EXPECT_TRUE(j.contains("verdict"));
  EXPECT_EQ(j.at("arms").size(), 4u);
}

TEST(Ablation, UapVsMopReportsBothArms) {
  const AblationReport r = run_ablation("uap_vs_mop", default_encoder(), tiny_ablation());
  ASSERT_EQ(r.arms.size(), 2u);
  EXPECT_EQ(r.verdicts.count("mop_beats_uap_all_seeds"), 1u);
}

TEST(Ablation, UnknownNameAndBadConfig) {
  EXPECT_THROW(run_ablation("nope", default_encoder(), tiny_ablation()), ConfigError);
  AblationConfig cfg = tiny_ablation();
  cfg.seeds.clear();
  EXPECT_THROW(cfg.validate(), ConfigError);
}

}  // namespace
}  // namespace fastprotect
