// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "fastprotect/tensor.hpp"

namespace fastprotect {

inline constexpr std::size_t kMinImageSide = 64;

/// RGB image with pixels in [0,1], shape 3×H×W, H and W at least 64.
class Image {
 public:
  /// Validates the invariants; throws ShapeError / InputError.
  explicit Image(Tensor pixels, std::string id = {});

  const Tensor& pixels() const noexcept { return pixels_; }
  const std::string& id() const noexcept { return id_; }
  std::size_t height() const noexcept { return pixels_.height(); }
  std::size_t width() const noexcept { return pixels_.width(); }

  /// Builds an image from an arbitrary tensor by clamping every value to [0,1].
  static Image clamped(Tensor t, std::string id = {});

  friend bool operator==(const Image& a, const Image& b) { return a.pixels_ == b.pixels_; }

 private:
  Tensor pixels_;
  std::string id_;
};

/// Protection budget. `eta` and `pgd_step_len` are in 1/255 pixel units.
struct Budget {
  int eta = 8;
  double pgd_step_len = 2.0;
  int pgd_steps = 100;

  double eta_float() const noexcept { return eta / 255.0; }
  double step_float() const noexcept { return pgd_step_len / 255.0; }
  /// Throws ConfigError on violated invariants.
  void validate() const;
};

/// Additive perturbation at base resolution with a hard L∞ bound.
struct Perturbation {
  Tensor values;
  double bound = 0.0;

  /// Zero perturbation of shape 3×resolution×resolution.
  static Perturbation zeros(std::size_t resolution, double bound);
  bool within_bound() const;
};

/// Decodes a PNG or JPEG file. Grayscale is promoted to RGB and alpha is
/// dropped. Throws IoError, DecodeError or FormatError.
Image load_image(const std::filesystem::path& path);
/// Writes an 8-bit RGB PNG with round-to-nearest quantization.
void save_image(const Image& img, const std::filesystem::path& path);
/// Writes a single-channel tensor (values clamped to [0,1]) as grayscale PNG.
void save_grayscale(const Tensor& map, const std::filesystem::path& path);

/// Bilinear resize with half-pixel centers (align_corners = false).
Tensor resize_bilinear(const Tensor& t, std::size_t new_height, std::size_t new_width);
Image resize_image(const Image& img, std::size_t new_height, std::size_t new_width);

/// 8-bit byte for a [0,1] value: round(v * 255).
unsigned char quantize_unit(double v);

/// JPEG round trip in memory at the given quality (1..100).
Image jpeg_roundtrip(const Image& img, int quality);

}  // namespace fastprotect
