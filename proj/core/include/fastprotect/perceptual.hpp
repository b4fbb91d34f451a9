// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "fastprotect/encoder.hpp"
#include "fastprotect/image.hpp"

namespace fastprotect {

enum class MapStage { raw, normalized, inverted, scaled };

/// Per-pixel noticeability map, shape 1×H×W.
struct PerceptualMap {
  Tensor m;
  MapStage stage = MapStage::raw;
};

struct ScalingParams {
  double alpha_boost = 1.3;
  double beta = 0.91;
  int c = 3;

  void validate() const;
  /// Largest multiplier decile_scale can produce.
  double max_multiplier() const;
  /// Every value decile_scale can produce: 1 and the nine decile multipliers.
  std::vector<double> multipliers() const;
};

/// Spatial distance between encoder features of x and x_hat: for every
/// pyramid layer, the channel-mean squared difference of unit-normalised
/// feature vectors, upsampled to H×W, averaged over layers.
PerceptualMap perceptual_map(const Encoder& encoder, const Image& x, const Image& x_hat);
/// Same, from already computed pyramids of the pair (lets callers reuse a pass).
PerceptualMap perceptual_map(const FeaturePyramid& original, const FeaturePyramid& protected_features,
                             std::size_t height, std::size_t width);

/// Min-max normalisation followed by 1 - m. A constant map becomes all ones.
PerceptualMap normalize_invert(const PerceptualMap& raw);

/// Decile step scaling of an inverted map: start from ones; for i = 1..9 set
/// every pixel strictly below the i-th decile (counted from the highest value)
/// to beta^i, times alpha_boost when i < c.
PerceptualMap decile_scale(const PerceptualMap& inverted, const ScalingParams& p);

/// clamp(x + m ⊙ delta, 0, 1), with the map broadcast over channels.
Image apply_strength(const Image& x, const Tensor& delta_full, const PerceptualMap& scaled);

/// Linear-interpolation quantile of `values` at probability q in [0,1].
double quantile(std::vector<double> values, double q);

}  // namespace fastprotect
