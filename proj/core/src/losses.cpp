// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastprotect/losses.hpp"

#include <algorithm>

#include "fastprotect/errors.hpp"

namespace fastprotect {

std::string_view to_string(TargetLevel level) {
  switch (level) {
    case TargetLevel::low: return "low";
    case TargetLevel::mid: return "mid";
    case TargetLevel::high: return "high";
  }
  return "unknown";
}

TargetLevel parse_target_level(std::string_view name) {
  if (name == "low") return TargetLevel::low;
  if (name == "mid") return TargetLevel::mid;
  if (name == "high") return TargetLevel::high;
  throw ConfigError("unknown target level '" + std::string(name) + "'");
}

TargetLatents make_target_latents(const Encoder& encoder, const Image& target, TargetLevel level) {
  Encoding enc = encoder.encode(target);
  return {std::move(enc.latent), std::move(enc.pyramid), level};
}

void LossConfig::validate() const {
  if (!(lambda_ml >= 0.0)) throw ConfigError("lambda_ml must be non-negative");
  if (layer_names.empty()) throw ConfigError("loss layer list must not be empty");
}

namespace {

void check_latent_shape(const LatentCode& z, const TargetLatents& tgt) {
  if (!z.z.same_shape(tgt.z_y.z)) {
    throw ShapeError("latent " + z.z.shape_string() + " does not match target latent " +
                     tgt.z_y.z.shape_string());
  }
}

// Index of each configured layer inside the pyramid.
std::vector<std::size_t> resolve_layers(const FeaturePyramid& pyramid, const LossConfig& cfg) {
  std::vector<std::size_t> indices;
  for (const auto& name : cfg.layer_names) {
    const auto it = std::find_if(pyramid.layers.begin(), pyramid.layers.end(),
                                 [&](const FeatureLayer& l) { return l.name == name; });
    if (it == pyramid.layers.end()) throw ConfigError("layer '" + name + "' is not in the encoder pyramid");
    indices.push_back(static_cast<std::size_t>(it - pyramid.layers.begin()));
  }
  return indices;
}

}  // namespace

double texture_loss(const LatentCode& z, const TargetLatents& tgt) {
  check_latent_shape(z, tgt);
  return -squared_distance(z.z.data(), tgt.z_y.z.data());
}

double texture_loss(const Encoder& encoder, const Image& x, const TargetLatents& tgt) {
  return texture_loss(encoder.encode(x).latent, tgt);
}

double mlp_loss(const Encoding& enc, const TargetLatents& tgt, const LossConfig& cfg) {
  cfg.validate();
  const auto indices = resolve_layers(tgt.f_y, cfg);
  const double latent_term = -texture_loss(enc.latent, tgt);
  double feature_term = 0.0;
  for (std::size_t i : indices) {
    const auto& name = tgt.f_y.layers[i].name;
    const FeatureLayer* layer = enc.pyramid.find(name);
    if (!layer) throw ConfigError("layer '" + name + "' is not in the encoder pyramid");
    if (!layer->feature.same_shape(tgt.f_y.layers[i].feature)) {
      throw ShapeError("feature " + name + " shape mismatch with target");
    }
    feature_term += squared_distance(layer->feature.data(), tgt.f_y.layers[i].feature.data());
  }
  const double weight = cfg.lambda_ml / static_cast<double>(indices.size());
  return -latent_term - weight * feature_term;
}

double mlp_loss(const Encoder& encoder, const Image& x, const TargetLatents& tgt, const LossConfig& cfg) {
  return mlp_loss(encoder.encode(x), tgt, cfg);
}

LossFn mlp_loss_fn(const TargetLatents& tgt, const LossConfig& cfg, LossView view) {
  cfg.validate();
  const auto indices = resolve_layers(tgt.f_y, cfg);
  const double sign = view == LossView::gain ? -1.0 : 1.0;
  const double weight = cfg.lambda_ml / static_cast<double>(indices.size());
  // Captures by reference: the target must outlive the returned function.
  return [&tgt, indices, sign, weight](const LatentCode& z, const FeaturePyramid& pyramid) {
    check_latent_shape(z, tgt);
    OutputGradient out;
    out.latent = z.z - tgt.z_y.z;
    double value = squared_norm(out.latent.data());
    out.latent *= 2.0 * sign;

    if (weight != 0.0) {
      if (pyramid.layers.size() != tgt.f_y.layers.size()) {
        throw ShapeError("pyramid depth does not match target pyramid");
      }
      out.pyramid.resize(pyramid.layers.size());
      double features = 0.0;
      for (std::size_t i : indices) {
        const Tensor& f = pyramid.layers[i].feature;
        const Tensor& fy = tgt.f_y.layers[i].feature;
        if (!f.same_shape(fy)) throw ShapeError("feature " + pyramid.layers[i].name + " shape mismatch with target");
        Tensor diff = f - fy;
        features += squared_norm(diff.data());
        diff *= 2.0 * sign * weight;
        if (out.pyramid[i].empty()) {
          out.pyramid[i] = std::move(diff);
        } else {
          out.pyramid[i] += diff;
        }
      }
      value += weight * features;
    }
    out.value = sign * value;
    return out;
  };
}

LossFn texture_loss_fn(const TargetLatents& tgt, LossView view) {
  const double sign = view == LossView::gain ? -1.0 : 1.0;
  return [&tgt, sign](const LatentCode& z, const FeaturePyramid&) {
    check_latent_shape(z, tgt);
    OutputGradient out;
    out.latent = z.z - tgt.z_y.z;
    out.value = sign * squared_norm(out.latent.data());
    out.latent *= 2.0 * sign;
    return out;
  };
}

Tensor project_linf(const Tensor& delta, double bound) {
  if (!(bound > 0.0)) throw ConfigError("projection bound must be positive");
  Tensor out = delta;
  for (double& v : out.data()) v = std::clamp(v, -bound, bound);
  return out;
}

}  // namespace fastprotect
