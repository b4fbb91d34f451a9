// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "fastprotect/assignment.hpp"
#include "fastprotect/datasets.hpp"
#include "fastprotect/errors.hpp"
#include "fastprotect/mop.hpp"
#include "fastprotect/targets.hpp"
#include "test_support.hpp"

namespace fastprotect {
namespace {

using testing::default_encoder;

constexpr std::size_t kSide = 64;

std::vector<Image> small_data(std::size_t n, std::uint64_t seed = 0) {
  return synthetic::images_of(synthetic::blob_dataset(n, 4, kSide, seed));
}

const TargetSpec& mid_target() {
  static const TargetSpec spec = make_target_spec(default_encoder(), TargetLevel::mid, 0, kSide);
  return spec;
}

TrainConfig small_config(int steps, int k) {
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.k = k;
  cfg.batch_size = 4;
  cfg.base_resolution = kSide;
  cfg.lr = 2e-3;
  return cfg;
}

CentroidSet centroids_for(const std::vector<Image>& data, int k, std::uint64_t seed = 0) {
  std::vector<LatentCode> latents;
  for (const auto& img : data) latents.push_back(default_encoder().encode(img).latent);
  return fit_assignment(latents, k, seed);
}

TEST(HalfBudget, FitsWithinEta) {
  for (int eta = 1; eta <= 32; ++eta) {
    const double b = half_budget_bound(eta);
    EXPECT_LE(2.0 * b, eta / 255.0);
    EXPECT_EQ(static_cast<double>(static_cast<float>(b)), b);
  }
}

TEST(TrainConfig, RejectsInvalidValues) {
  auto bad = [](auto mutate) {
    TrainConfig cfg;
    mutate(cfg);
    EXPECT_THROW(cfg.validate(), ConfigError);
  };
  bad([](TrainConfig& c) { c.steps = 0; });
  bad([](TrainConfig& c) { c.k = 0; });
  bad([](TrainConfig& c) { c.batch_size = 0; });
  bad([](TrainConfig& c) { c.eta = 0; });
  bad([](TrainConfig& c) { c.lr = 0.0; });
  bad([](TrainConfig& c) { c.beta1 = 1.0; });
  bad([](TrainConfig& c) { c.base_resolution = 32; });
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

TEST(TrainBank, EveryComponentStaysWithinHalfBudgetAfterEveryStep) {
  const auto data = small_data(8);
  const TrainConfig cfg = small_config(12, 2);
  const CentroidSet cs = centroids_for(data, 2);
  const double bound = half_budget_bound(cfg.eta);
  int observed = 0;
  const auto bank = train_bank(default_encoder(), data, mid_target().latents, cs, cfg,
                               [&](int, double, const PerturbationBank& b) {
                                 ++observed;
                                 EXPECT_TRUE(b.within_bounds());
                                 EXPECT_LE(max_abs(b.delta_g.values.data()), bound);
                                 for (const auto& d : b.deltas) EXPECT_LE(max_abs(d.values.data()), bound);
                                 for (int k = 0; k < b.k(); ++k) {
                                   EXPECT_LE(max_abs(b.combined(k).data()), cfg.eta / 255.0);
                                 }
                               });
  EXPECT_EQ(observed, cfg.steps);
  EXPECT_EQ(bank.k(), 2);
  EXPECT_EQ(bank.eta, cfg.eta);
  EXPECT_EQ(bank.base_resolution, kSide);
  EXPECT_EQ(bank.target_id, TargetLevel::mid);
}

TEST(TrainBank, TrainingLossDecreases) {
  const auto data = small_data(16);
  const TrainConfig cfg = small_config(40, 2);
  const CentroidSet cs = centroids_for(data, 2);
  const auto& tgt = mid_target().latents;
  const double before =
      mean_training_loss(default_encoder(), data, tgt, cfg.loss, [](std::size_t) { return Tensor(3, kSide, kSide); });
  const auto bank = train_bank(default_encoder(), data, tgt, cs, cfg);
  const double after = mean_training_loss(default_encoder(), data, tgt, cfg.loss, [&](std::size_t i) {
    return bank.combined(assign(default_encoder().encode(data[i]).latent, cs));
  });
  EXPECT_LT(after, before);
}

TEST(TrainBank, SingleClusterWithoutGlobalEqualsUap) {
  const auto data = small_data(6);
  TrainConfig cfg = small_config(6, 1);
  cfg.train_global = false;
  const CentroidSet cs = centroids_for(data, 1);
  const auto& tgt = mid_target().latents;
  const auto bank = train_bank(default_encoder(), data, tgt, cs, cfg);
  const auto uap = train_uap(default_encoder(), data, tgt, cfg, half_budget_bound(cfg.eta));
  EXPECT_EQ(max_abs(bank.delta_g.values.data()), 0.0);
  EXPECT_EQ(bank.deltas[0].values, uap.values);
}

TEST(TrainBank, ClusterWithoutSamplesIsNeverUpdated) {
  const auto data = small_data(8);
  CentroidSet cs = centroids_for(data, 1);
  std::vector<double> far(cs.dim, 1e6);
  cs.centroids.push_back(far);
  cs.k = 2;
  for (const auto& img : data) ASSERT_EQ(assign(default_encoder().encode(img).latent, cs), 0);

  const auto bank = train_bank(default_encoder(), data, mid_target().latents, cs, small_config(5, 2));
  EXPECT_EQ(max_abs(bank.deltas[1].values.data()), 0.0);
  EXPECT_GT(max_abs(bank.deltas[0].values.data()), 0.0);
  EXPECT_GT(max_abs(bank.delta_g.values.data()), 0.0);
}

TEST(TrainBank, ObservedLossIsNegatedAttackLoss) {
  const auto data = small_data(4);
  TrainConfig cfg = small_config(1, 1);
  cfg.batch_size = 1;
  const CentroidSet cs = centroids_for(data, 1);
  const auto& tgt = mid_target().latents;
  double observed = std::numeric_limits<double>::quiet_NaN();
  train_bank(default_encoder(), data, tgt, cs, cfg, [&](int, double loss, const PerturbationBank&) {
    observed = loss;
  });
  // At step 0 the perturbation is zero, so the loss belongs to one clean image.
  bool matched = false;
  for (const auto& img : data) {
    if (observed == -mlp_loss(default_encoder(), img, tgt, cfg.loss)) matched = true;
  }
  EXPECT_TRUE(matched);
}

TEST(TrainBank, MeanTrainingLossIsNegatedAttackLoss) {
  const auto data = small_data(3);
  const auto& tgt = mid_target().latents;
  const LossConfig loss;
  const Tensor shift(3, kSide, kSide, 0.01);
  double expected = 0.0;
  for (const auto& img : data) expected -= mlp_loss(default_encoder(), Image::clamped(img.pixels() + shift), tgt, loss);
  expected /= 3.0;
  EXPECT_DOUBLE_EQ(mean_training_loss(default_encoder(), data, tgt, loss, [&](std::size_t) { return shift; }),
                   expected);
}

TEST(TrainBank, IsDeterministic) {
  const auto data = small_data(8);
  const TrainConfig cfg = small_config(4, 2);
  const CentroidSet cs = centroids_for(data, 2);
  const auto a = train_bank(default_encoder(), data, mid_target().latents, cs, cfg);
  const auto b = train_bank(default_encoder(), data, mid_target().latents, cs, cfg);
  EXPECT_EQ(a.delta_g.values, b.delta_g.values);
  for (int k = 0; k < 2; ++k) EXPECT_EQ(a.deltas[k].values, b.deltas[k].values);
}

TEST(TrainBank, RejectsBadInputs) {
  const auto data = small_data(4);
  const CentroidSet cs = centroids_for(data, 2);
  const auto& tgt = mid_target().latents;
  EXPECT_THROW(train_bank(default_encoder(), std::span<const Image>{}, tgt, cs, small_config(1, 2)), ConfigError);
  EXPECT_THROW(train_bank(default_encoder(), data, tgt, cs, small_config(1, 3)), ConfigError);
  const std::vector<Image> wrong = {synthetic::random_image(128, 1)};
  EXPECT_THROW(train_bank(default_encoder(), wrong, tgt, centroids_for(wrong, 1), small_config(1, 1)), ShapeError);
  EXPECT_THROW(train_uap(default_encoder(), data, tgt, small_config(1, 1), 0.0), ConfigError);
}

TEST(TrainBank, NonFiniteLossNamesTheStep) {
  const auto data = small_data(4);
  TargetLatents tgt = mid_target().latents;
  tgt.z_y.z.data()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    train_uap(default_encoder(), data, tgt, small_config(2, 1), half_budget_bound(8));
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_EQ(e.where(), "step 0");
  }
}

std::array<TargetSpec, 3> small_targets() { return testing::targets_at(kSide); }

TEST(TrainModel, BuildsThreeBanksWithSharedAssignment) {
  const auto data = small_data(8);
  const auto targets = small_targets();
  const MoPModel m = train_model(default_encoder(), data, targets, small_config(3, 2));
  EXPECT_EQ(m.k(), 2);
  EXPECT_EQ(m.eta(), 8);
  EXPECT_EQ(m.base_resolution(), kSide);
  EXPECT_EQ(m.centroids.k, 2);
  EXPECT_EQ(m.encoder_fp, default_encoder().fingerprint());
  for (TargetLevel level : kTargetLevels) {
    EXPECT_EQ(m.bank(level).target_id, level);
    EXPECT_TRUE(m.bank(level).within_bounds());
    EXPECT_EQ(m.target(level).level, level);
    EXPECT_DOUBLE_EQ(m.target(level).entropy, targets[static_cast<std::size_t>(level)].entropy);
  }
  EXPECT_EQ(m.train_meta.steps, 3);
  EXPECT_NO_THROW(check_compatible(m, default_encoder()));
}

TEST(TrainModel, IsDeterministicDownToTheBytes) {
  const auto data = small_data(8);
  const auto targets = small_targets();
  const auto a = serialize_model(train_model(default_encoder(), data, targets, small_config(2, 2)));
  const auto b = serialize_model(train_model(default_encoder(), data, targets, small_config(2, 2)));
  EXPECT_EQ(a, b);
}

TEST(ZeroModel, HasZeroPerturbations) {
  const auto data = small_data(4);
  const MoPModel m = zero_model(default_encoder(), small_targets(), centroids_for(data, 2), 8, kSide);
  for (TargetLevel level : kTargetLevels) {
    for (int k = 0; k < m.k(); ++k) EXPECT_EQ(max_abs(m.bank(level).combined(k).data()), 0.0);
  }
  EXPECT_THROW(m.bank(TargetLevel::low).combined(2), ConfigError);
}

TEST(CheckCompatible, RejectsForeignEncoder) {
  const auto data = small_data(4);
  const MoPModel m = zero_model(default_encoder(), small_targets(), centroids_for(data, 1), 8, kSide);
  EncoderConfig other;
  other.seed = 99;
  EXPECT_THROW(check_compatible(m, ConvEncoder(other)), CompatibilityError);
}

}  // namespace
}  // namespace fastprotect
