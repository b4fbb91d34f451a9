// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fastprotect/assignment.hpp"
#include "fastprotect/encoder.hpp"
#include "fastprotect/image.hpp"
#include "fastprotect/losses.hpp"
#include "fastprotect/targets.hpp"

namespace fastprotect {

/// Target-conditioned mixture of perturbations: one global perturbation
/// plus K cluster perturbations, each bounded by eta/2.
struct PerturbationBank {
  Perturbation delta_g;
  std::vector<Perturbation> deltas;
  int eta = 8;
  TargetLevel target_id = TargetLevel::mid;
  std::size_t base_resolution = 512;

  int k() const noexcept { return static_cast<int>(deltas.size()); }
  /// delta_g + deltas[cluster].
  Tensor combined(int cluster) const;
  /// All half-budget bounds hold.
  bool within_bounds() const;
};

/// Bound used for each MoP component: the largest float32 value <= eta/2,
/// so that stored components sum to at most eta.
double half_budget_bound(int eta);

struct TrainConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.99;
  double adam_epsilon = 1e-8;
  int batch_size = 16;
  int steps = 2000;
  int k = 4;
  int eta = 8;
  std::uint64_t seed = 0;
  LossConfig loss;
  std::size_t base_resolution = 512;
  /// When false, delta_g stays at zero (UAP equivalence runs).
  bool train_global = true;

  void validate() const;
};

/// Per-step observer: step index (0-based), mean batch loss in descent view,
/// bank after the projected update.
using TrainObserver = std::function<void(int, double, const PerturbationBank&)>;

/// Adam training of one bank against one target. Images must be at the base
/// resolution; centroids must come from the same encoder.
PerturbationBank train_bank(const Encoder& encoder, std::span<const Image> data, const TargetLatents& target,
                            const CentroidSet& centroids, const TrainConfig& cfg,
                            const TrainObserver& observer = {});

/// Dedicated single-perturbation (UAP) trainer, projected onto `bound`.
Perturbation train_uap(const Encoder& encoder, std::span<const Image> data, const TargetLatents& target,
                       const TrainConfig& cfg, double bound, const TrainObserver& observer = {});

/// Mean descent-view training loss of images protected with `perturbation_for(i)`.
double mean_training_loss(const Encoder& encoder, std::span<const Image> data, const TargetLatents& target,
                          const LossConfig& loss, const std::function<Tensor(std::size_t)>& perturbation_for);

struct TargetSummary {
  TargetLevel level = TargetLevel::mid;
  std::uint64_t seed = 0;
  double entropy = 0.0;
  LatentCode z_y;
};

struct TrainMeta {
  int steps = 0;
  double lr = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  int batch_size = 0;
  std::uint64_t seed = 0;
  double lambda_ml = 0.0;
  std::vector<std::string> layers;
};

struct MoPModel {
  std::array<PerturbationBank, 3> banks;  // indexed by TargetLevel
  CentroidSet centroids;
  std::array<TargetSummary, 3> targets;
  std::string encoder_fp;
  EncoderConfig encoder_cfg;
  TrainMeta train_meta;

  const PerturbationBank& bank(TargetLevel level) const { return banks[static_cast<std::size_t>(level)]; }
  const TargetSummary& target(TargetLevel level) const { return targets[static_cast<std::size_t>(level)]; }
  int eta() const { return banks[0].eta; }
  int k() const { return banks[0].k(); }
  std::size_t base_resolution() const { return banks[0].base_resolution; }
  /// Throws FormatError if the banks disagree on K, eta or resolution.
  void validate() const;
};

/// Fits centroids once on the encoded data, then trains the low/mid/high banks.
MoPModel train_model(const Encoder& encoder, std::span<const Image> data,
                     const std::array<TargetSpec, 3>& targets, const TrainConfig& cfg);

/// A model whose perturbations are all zero (useful as a baseline).
MoPModel zero_model(const Encoder& encoder, const std::array<TargetSpec, 3>& targets,
                    const CentroidSet& centroids, int eta, std::size_t base_resolution);

/// Throws CompatibilityError unless the model was built with this encoder.
void check_compatible(const MoPModel& model, const Encoder& encoder);

/// FPMP bundle: "FPMP", u32 version, u32 header length, JSON header, then
/// little-endian float32 tensors in directory order.
inline constexpr std::uint32_t kBundleVersion = 1;
std::vector<unsigned char> serialize_model(const MoPModel& m);
MoPModel deserialize_model(std::span<const unsigned char> bytes);
void save_model(const MoPModel& m, const std::filesystem::path& path);
MoPModel load_model(const std::filesystem::path& path);

}  // namespace fastprotect
