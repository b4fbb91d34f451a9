// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fastprotect/encoder.hpp"
#include "fastprotect/mop.hpp"
#include "fastprotect/pipeline.hpp"

namespace fastprotect {

/// Mean protection proxy of clamp(x_i + perturbation_for(i)) against `target`.
double mean_protection_proxy(const Encoder& encoder, std::span<const Image> images, const LatentCode& target,
                             const std::function<Tensor(std::size_t)>& perturbation_for);

struct UapMopComparison {
  double mop_loss = 0.0;
  double uap_loss = 0.0;
  double mop_proxy = 0.0;
  double uap_proxy = 0.0;

  bool mop_wins() const { return mop_loss < uap_loss && mop_proxy > uap_proxy; }
};

/// Trains a K-cluster MoP bank (cfg.k) and a single UAP at the full eta
/// bound on the same data and target; reports final training loss (descent
/// view) and mean protection proxy on the training images.
UapMopComparison compare_uap_mop(const Encoder& encoder, std::span<const Image> data, const TargetLatents& target,
                                 const TrainConfig& cfg);

struct SelectionTrend {
  int flat_total = 0;
  int flat_low = 0;
  int textured_total = 0;
  int textured_high = 0;

  double flat_rate() const { return flat_total ? static_cast<double>(flat_low) / flat_total : 0.0; }
  double textured_rate() const { return textured_total ? static_cast<double>(textured_high) / textured_total : 0.0; }
};

/// Target selection on `count` seeded flat and `count` seeded textured images.
SelectionTrend selection_trend(const Encoder& encoder, std::span<const TargetEntropy> targets, int count,
                               std::uint64_t seed, std::size_t resolution);

struct WarmStartCase {
  std::string id;
  int cold_steps = 0;  // first iterate reaching the cold run's final loss
  int warm_steps = 0;  // same threshold, warm-started; steps + 1 if never reached
  double cold_final = 0.0;
};

/// Cold PGD and PGD warm-started from protect()'s output on each image,
/// both against the target protect() selects.
std::vector<WarmStartCase> warm_start_study(const Encoder& encoder, const MoPModel& model,
                                            std::span<const Image> images, const Budget& budget,
                                            const LossConfig& loss, const ProtectOptions& opts = {});

/// Index of the first loss >= threshold, or losses.size() when none is.
int steps_to_threshold(std::span<const double> losses, double threshold);

struct AblationConfig {
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  /// Targets are a fixed asset shared by all seeds.
  std::uint64_t target_seed = 0;
  std::size_t train_images = 64;
  std::size_t holdout_images = 32;
  int clusters = 4;
  TrainConfig train;
  std::vector<int> k_values = {1, 2, 4, 8};
  int selection_cases = 20;
  /// Selection is judged on full-size encodings.
  std::size_t selection_resolution = kTargetSide;
  std::size_t warm_images = 10;
  Budget pgd{8, 2.0, 50};
  int warm_step_limit = 30;
  double warm_success_rate = 0.7;

  AblationConfig();
  void validate() const;
};

struct AblationArm {
  std::string name;
  std::vector<double> train_loss;  // per seed
  std::vector<double> proxy;       // per seed

  double mean_proxy() const;
  double mean_train_loss() const;
};

struct AblationReport {
  std::string name;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationArm> arms;
  std::map<std::string, bool> verdicts;
  std::map<std::string, double> values;

  bool passed() const;
  std::string to_json() const;
};

inline constexpr std::array<std::string_view, 4> kAblationNames = {"uap_vs_mop", "k_sweep", "target_sweep",
                                                                   "warm_start"};

/// Runs one ablation on seeded synthetic blob data. Throws ConfigError for an unknown name.
AblationReport run_ablation(std::string_view name, const Encoder& encoder, const AblationConfig& cfg);

}  // namespace fastprotect
