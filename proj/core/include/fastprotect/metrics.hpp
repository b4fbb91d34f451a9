// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fastprotect/encoder.hpp"
#include "fastprotect/image.hpp"

namespace fastprotect {

/// Argument roles for measure(); the order cannot be swapped by accident.
struct Original {
  const Image& image;
};
struct Protected {
  const Image& image;
};

struct MetricsReport {
  double psnr = 0.0;  // dB, MAX = 1; +inf for identical images
  double linf = 0.0;
  double mean_abs_delta = 0.0;
  /// ||E(x_hat) - z_y|| / ||E(x) - z_y||, both encoded at the target resolution.
  double latent_shift_ratio = 1.0;
  double protection_proxy = 0.0;  // 1 - latent_shift_ratio
};

double psnr(const Image& a, const Image& b);

/// The encoding resolution is implied by the target latent's shape.
MetricsReport measure(const Encoder& encoder, Original x, Protected x_hat, const LatentCode& target);

}  // namespace fastprotect
