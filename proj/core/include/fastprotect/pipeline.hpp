// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fastprotect/encoder.hpp"
#include "fastprotect/image.hpp"
#include "fastprotect/mop.hpp"
#include "fastprotect/perceptual.hpp"

namespace fastprotect {

struct ProtectOptions {
  bool adaptive_strength = true;
  std::optional<TargetLevel> fixed_target;
  std::optional<int> fixed_cluster;
  ScalingParams scaling;
  /// Keep the scaled strength map in the result.
  bool keep_map = false;
};

/// Wall time per stage in milliseconds.
struct StageTiming {
  double encode_ms = 0.0;
  double select_ms = 0.0;
  double resize_ms = 0.0;
  double map_ms = 0.0;
  double apply_ms = 0.0;

  double total_ms() const { return encode_ms + select_ms + resize_ms + map_ms + apply_ms; }
};

struct ProtectionResult {
  Image protected_image;
  TargetLevel target = TargetLevel::mid;
  int cluster = 0;
  /// max |protected - original|, before quantization.
  double effective_linf = 0.0;
  StageTiming timing;
  std::optional<PerceptualMap> map;
};

/// Protects one image of any size: encode the base-resolution downsample,
/// pick target and cluster, upsample the cluster perturbation and apply it,
/// modulated by the perceptual strength map unless disabled.
ProtectionResult protect(const Encoder& encoder, const MoPModel& model, const Image& x,
                         const ProtectOptions& opts = {});

struct BatchOutcome {
  std::string id;
  std::optional<ProtectionResult> result;
  std::string error;

  bool ok() const noexcept { return result.has_value(); }
};

/// Element-wise protect; a failing image produces an error record and the
/// batch continues. Order is preserved.
std::vector<BatchOutcome> protect_batch(const Encoder& encoder, const MoPModel& model, std::span<const Image> xs,
                                        const ProtectOptions& opts = {});
/// Same, loading each file first. Load failures become error records.
std::vector<BatchOutcome> protect_files(const Encoder& encoder, const MoPModel& model,
                                        std::span<const std::filesystem::path> paths,
                                        const ProtectOptions& opts = {});

}  // namespace fastprotect
