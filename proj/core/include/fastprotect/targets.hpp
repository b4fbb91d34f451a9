// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "fastprotect/encoder.hpp"
#include "fastprotect/image.hpp"
#include "fastprotect/losses.hpp"

namespace fastprotect {

inline constexpr std::size_t kTargetSide = 512;

/// Tile period in pixels of the 512² target image for each level.
constexpr std::size_t target_period(TargetLevel level) {
  switch (level) {
    case TargetLevel::low: return 256;
    case TargetLevel::mid: return 64;
    case TargetLevel::high: return 16;
  }
  return 0;
}

struct TargetSpec {
  TargetLevel level = TargetLevel::mid;
  std::uint64_t seed = 0;
  Image image;
  TargetLatents latents;
  double entropy = 0.0;
};

/// 512² image tiling a two-tone banded motif at the level's period, with a
/// per-tile random band swap. Deterministic per (level, seed).
Image generate_target(TargetLevel level, std::uint64_t seed);

/// Shannon entropy (nats) of a min-max normalised `bins`-bin histogram of z.
/// A constant latent has entropy 0.
double latent_entropy(const Tensor& z, int bins = 256);
inline double latent_entropy(const LatentCode& z, int bins = 256) { return latent_entropy(z.z, bins); }

/// Generates the level's target, resizes it to `resolution` and encodes it.
TargetSpec make_target_spec(const Encoder& encoder, TargetLevel level, std::uint64_t seed,
                            std::size_t resolution = kTargetSide);

/// All three targets. Throws ConfigError when their latent entropies are not
/// strictly increasing low < mid < high under this encoder.
std::array<TargetSpec, 3> make_targets(const Encoder& encoder, std::uint64_t seed,
                                       std::size_t resolution = kTargetSide);

struct TargetEntropy {
  TargetLevel level;
  double entropy;
};

/// argmin_t |H(z) - H(z_y^t)|; ties resolved low < mid < high.
TargetLevel select_target(double latent_entropy_value, std::span<const TargetEntropy> targets);
TargetLevel select_target(const LatentCode& z, std::span<const TargetSpec> targets);

}  // namespace fastprotect
