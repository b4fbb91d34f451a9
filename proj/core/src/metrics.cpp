// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastprotect/metrics.hpp"

#include <cmath>
#include <limits>

#include "fastprotect/errors.hpp"

namespace fastprotect {

double psnr(const Image& a, const Image& b) {
  if (!a.pixels().same_shape(b.pixels())) throw ShapeError("psnr of differently shaped images");
  const double mse = squared_distance(a.pixels().data(), b.pixels().data()) / static_cast<double>(a.pixels().size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

MetricsReport measure(const Encoder& encoder, Original x, Protected x_hat, const LatentCode& target) {
  const Tensor& a = x.image.pixels();
  const Tensor& b = x_hat.image.pixels();
  if (!a.same_shape(b)) throw ShapeError("measure: " + a.shape_string() + " vs " + b.shape_string());

  MetricsReport r;
  r.psnr = psnr(x.image, x_hat.image);
  double sum_abs = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = std::abs(db[i] - da[i]);
    sum_abs += d;
    r.linf = std::max(r.linf, d);
  }
  r.mean_abs_delta = sum_abs / static_cast<double>(da.size());

  const auto factor = static_cast<std::size_t>(encoder.downsample_factor());
  const std::size_t rh = target.z.height() * factor;
  const std::size_t rw = target.z.width() * factor;
  const Tensor za = encoder.encode(resize_bilinear(a, rh, rw)).latent.z;
  if (!za.same_shape(target.z)) {
    throw ShapeError("target latent " + target.z.shape_string() + " does not match encoder output " +
                     za.shape_string());
  }
  const double before = std::sqrt(squared_distance(za.data(), target.z.data()));
  if (r.linf == 0.0) {
    r.latent_shift_ratio = 1.0;
  } else {
    const Tensor zb = encoder.encode(resize_bilinear(b, rh, rw)).latent.z;
    const double after = std::sqrt(squared_distance(zb.data(), target.z.data()));
    r.latent_shift_ratio = before > 0.0 ? after / before : std::numeric_limits<double>::infinity();
  }
  r.protection_proxy = 1.0 - r.latent_shift_ratio;
  return r;
}

}  // namespace fastprotect
