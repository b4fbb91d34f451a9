// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fastprotect/encoder.hpp"
#include "fastprotect/image.hpp"

namespace fastprotect {

/// Pattern-repetition level of a target image.
enum class TargetLevel { low = 0, mid = 1, high = 2 };

inline constexpr std::array<TargetLevel, 3> kTargetLevels = {TargetLevel::low, TargetLevel::mid,
                                                            TargetLevel::high};

std::string_view to_string(TargetLevel level);
/// Throws ConfigError for anything except "low", "mid", "high".
TargetLevel parse_target_level(std::string_view name);

/// Encoder outputs of a target image.
struct TargetLatents {
  LatentCode z_y;
  FeaturePyramid f_y;
  TargetLevel target_id = TargetLevel::mid;
};

TargetLatents make_target_latents(const Encoder& encoder, const Image& target, TargetLevel level);

struct LossConfig {
  double lambda_ml = 3.5e-5;
  std::vector<std::string> layer_names = {"down_1", "down_2", "down_3", "mid_0"};

  void validate() const;
};

/// Which way a protection loss is reported.
///   gain:    -||z - z_y||^2 - (λ/L) Σ ||f - f_y||^2, maximized by PGD ascent.
///   descent: the negation, minimized by the perturbation trainer.
enum class LossView { gain, descent };

/// Texture loss in gain view: -||z - z_y||^2.
double texture_loss(const LatentCode& z, const TargetLatents& tgt);
double texture_loss(const Encoder& encoder, const Image& x, const TargetLatents& tgt);

/// Multi-layer protection loss in gain view.
double mlp_loss(const Encoding& enc, const TargetLatents& tgt, const LossConfig& cfg);
double mlp_loss(const Encoder& encoder, const Image& x, const TargetLatents& tgt, const LossConfig& cfg);

/// Differentiable multi-layer protection loss for Encoder::value_and_gradient.
/// Layer names are resolved against the target pyramid up front (ConfigError if absent).
LossFn mlp_loss_fn(const TargetLatents& tgt, const LossConfig& cfg, LossView view = LossView::gain);
LossFn texture_loss_fn(const TargetLatents& tgt, LossView view = LossView::gain);

/// Elementwise clamp to [-bound, bound].
Tensor project_linf(const Tensor& delta, double bound);

struct PgdTrace {
  Image protected_image;
  /// Gain-view loss at every iterate x^(0) .. x^(N).
  std::vector<double> losses;
};

/// Iterative signed-gradient ascent on the multi-layer protection loss,
/// projected onto the eta-ball of x and clamped to [0,1] after every step.
/// With `init`, iteration starts from x + resize(init).
Image pgd_protect(const Encoder& encoder, const Image& x, const TargetLatents& tgt,
                  const Budget& budget, const LossConfig& cfg,
                  const std::optional<Perturbation>& init = std::nullopt);
PgdTrace pgd_protect_traced(const Encoder& encoder, const Image& x, const TargetLatents& tgt,
                            const Budget& budget, const LossConfig& cfg,
                            const std::optional<Perturbation>& init = std::nullopt);

}  // namespace fastprotect
