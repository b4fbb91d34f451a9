// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "fastprotect/encoder.hpp"
#include "fastprotect/image.hpp"
#include "fastprotect/mop.hpp"
#include "fastprotect/perceptual.hpp"

namespace fastprotect::cli {

struct Paths {
  std::filesystem::path data = "data";
  std::filesystem::path model = "model.fpmp";
  std::filesystem::path output = "out";
};

/// Everything a run depends on besides its input files.
struct RunConfig {
  EncoderConfig encoder;
  TrainConfig train;  // its `loss` member is the loss section
  ScalingParams scaling;
  Budget pgd{8, 2.0, 100};
  Paths paths;
  std::uint64_t seed = 0;

  const LossConfig& loss() const { return train.loss; }
  /// Throws ConfigError.
  void validate() const;
  /// Canonical INI text; parse(to_ini()) reproduces the config.
  std::string to_ini() const;
  /// SHA-256 (hex) of to_ini().
  std::string hash() const;

  /// Sections [run] [encoder] [train] [loss] [scaling] [pgd] [paths]; keys not
  /// present keep their defaults, unknown keys are a ConfigError.
  static RunConfig parse(const std::string& ini_text);
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace fastprotect::cli
