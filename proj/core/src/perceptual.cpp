// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastprotect/perceptual.hpp"

#include <algorithm>
#include <cmath>

#include "fastprotect/errors.hpp"

namespace fastprotect {

void ScalingParams::validate() const {
  if (!(beta > 0.0 && beta < 1.0)) throw ConfigError("scaling beta must be in (0,1)");
  if (!(alpha_boost >= 1.0)) throw ConfigError("scaling alpha must be >= 1");
  if (c < 1 || c > 9) throw ConfigError("scaling c must be in [1,9]");
}

std::vector<double> ScalingParams::multipliers() const {
  std::vector<double> out = {1.0};
  for (int i = 1; i <= 9; ++i) out.push_back(std::pow(beta, i) * (i < c ? alpha_boost : 1.0));
  return out;
}

double ScalingParams::max_multiplier() const {
  const auto m = multipliers();
  return *std::max_element(m.begin(), m.end());
}

namespace {

constexpr double kNormEpsilon = 1e-10;

Tensor layer_distance(const Tensor& a, const Tensor& b) {
  Tensor d(1, a.height(), a.width(), 0.0);
  const std::size_t positions = a.height() * a.width();
  const std::size_t channels = a.channels();
  std::vector<double> norm_a(positions, 0.0);
  std::vector<double> norm_b(positions, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    const auto ca = a.channel(c);
    const auto cb = b.channel(c);
    for (std::size_t p = 0; p < positions; ++p) {
      norm_a[p] += ca[p] * ca[p];
      norm_b[p] += cb[p] * cb[p];
    }
  }
  for (std::size_t p = 0; p < positions; ++p) {
    norm_a[p] = 1.0 / (std::sqrt(norm_a[p]) + kNormEpsilon);
    norm_b[p] = 1.0 / (std::sqrt(norm_b[p]) + kNormEpsilon);
  }
  auto out = d.data();
  for (std::size_t c = 0; c < channels; ++c) {
    const auto ca = a.channel(c);
    const auto cb = b.channel(c);
    for (std::size_t p = 0; p < positions; ++p) {
      const double diff = ca[p] * norm_a[p] - cb[p] * norm_b[p];
      out[p] += diff * diff;
    }
  }
  for (double& v : out) v /= static_cast<double>(channels);
  return d;
}

std::size_t round_up(std::size_t v, std::size_t multiple) { return (v + multiple - 1) / multiple * multiple; }

}  // namespace

PerceptualMap perceptual_map(const FeaturePyramid& original, const FeaturePyramid& protected_features,
                             std::size_t height, std::size_t width) {
  if (original.layers.size() != protected_features.layers.size() || original.layers.empty()) {
    throw ShapeError("perceptual map needs two pyramids of equal depth");
  }
  Tensor acc(1, height, width, 0.0);
  for (std::size_t l = 0; l < original.layers.size(); ++l) {
    const Tensor& a = original.layers[l].feature;
    const Tensor& b = protected_features.layers[l].feature;
    if (!a.same_shape(b)) throw ShapeError("feature " + original.layers[l].name + " shape mismatch");
    acc += resize_bilinear(layer_distance(a, b), height, width);
  }
  acc *= 1.0 / static_cast<double>(original.layers.size());
  return {std::move(acc), MapStage::raw};
}

PerceptualMap perceptual_map(const Encoder& encoder, const Image& x, const Image& x_hat) {
  if (!x.pixels().same_shape(x_hat.pixels())) {
    throw ShapeError("perceptual map inputs differ in shape: " + x.pixels().shape_string() + " vs " +
                     x_hat.pixels().shape_string());
  }
  // The backbone needs sides divisible by its downsample factor.
  const auto factor = static_cast<std::size_t>(encoder.downsample_factor());
  const std::size_t bh = round_up(x.height(), factor);
  const std::size_t bw = round_up(x.width(), factor);
  const Tensor a = resize_bilinear(x.pixels(), bh, bw);
  const Tensor b = resize_bilinear(x_hat.pixels(), bh, bw);
  return perceptual_map(encoder.encode(a).pyramid, encoder.encode(b).pyramid, x.height(), x.width());
}

PerceptualMap normalize_invert(const PerceptualMap& raw) {
  if (raw.stage != MapStage::raw) throw ConfigError("normalize_invert expects a raw map");
  PerceptualMap out{raw.m, MapStage::inverted};
  auto v = out.m.data();
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  if (!(range > 0.0)) {
    std::fill(v.begin(), v.end(), 1.0);
    return out;
  }
  for (double& x : v) x = 1.0 - std::clamp((x - lo) / range, 0.0, 1.0);
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ShapeError("quantile of empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return std::lerp(values[lo], values[hi], pos - static_cast<double>(lo));
}

PerceptualMap decile_scale(const PerceptualMap& inverted, const ScalingParams& p) {
  if (inverted.stage != MapStage::inverted) throw ConfigError("decile_scale expects an inverted map");
  p.validate();
  const auto v = inverted.m.data();
  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end());
  auto at = [&](double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return std::lerp(sorted[lo], sorted[hi], pos - static_cast<double>(lo));
  };

  // q_i: the i-th decile from the top, i.e. the (10 - i)/10 quantile.
  double thresholds[10];
  double factors[10];
  for (int i = 1; i <= 9; ++i) {
    thresholds[i] = at((10.0 - i) / 10.0);
    factors[i] = std::pow(p.beta, i) * (i < p.c ? p.alpha_boost : 1.0);
  }
  PerceptualMap out{Tensor(1, inverted.m.height(), inverted.m.width(), 1.0), MapStage::scaled};
  auto o = out.m.data();
  for (std::size_t j = 0; j < v.size(); ++j) {
    // Later i overwrite earlier ones.
    for (int i = 1; i <= 9; ++i) {
      if (v[j] < thresholds[i]) o[j] = factors[i];
    }
  }
  return out;
}

Image apply_strength(const Image& x, const Tensor& delta_full, const PerceptualMap& scaled) {
  if (!delta_full.same_shape(x.pixels())) {
    throw ShapeError("perturbation " + delta_full.shape_string() + " does not match image " + x.pixels().shape_string());
  }
  if (scaled.m.channels() != 1 || scaled.m.height() != x.height() || scaled.m.width() != x.width()) {
    throw ShapeError("strength map " + scaled.m.shape_string() + " does not match image " + x.pixels().shape_string());
  }
  Tensor out = x.pixels();
  const auto m = scaled.m.data();
  const auto d = delta_full.data();
  const std::size_t plane = x.height() * x.width();
  auto o = out.data();
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t idx = c * plane + p;
      o[idx] = std::clamp(o[idx] + m[p] * d[idx], 0.0, 1.0);
    }
  }
  return Image(std::move(out), x.id());
}

}  // namespace fastprotect
