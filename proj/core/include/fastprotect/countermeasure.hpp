// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "fastprotect/image.hpp"

namespace fastprotect {

/// A purification applied by an adversary before mimicry.
struct Countermeasure {
  enum class Kind { gaussian_noise, jpeg, resize_roundtrip };

  Kind kind = Kind::jpeg;
  double param = 75.0;  // sigma, quality or scale

  static Countermeasure gaussian_noise(double sigma) { return {Kind::gaussian_noise, sigma}; }
  static Countermeasure jpeg(int quality) { return {Kind::jpeg, static_cast<double>(quality)}; }
  static Countermeasure resize_roundtrip(double scale) { return {Kind::resize_roundtrip, scale}; }

  /// Throws ConfigError.
  void validate() const;
  /// "noise:<sigma>", "jpeg:<quality>" or "resize:<scale>".
  std::string to_string() const;
  static Countermeasure parse(std::string_view spec);
};

Image apply_countermeasure(const Image& x_hat, const Countermeasure& cm, std::uint64_t seed);

}  // namespace fastprotect
