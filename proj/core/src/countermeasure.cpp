// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastprotect/countermeasure.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <random>

#include "fastprotect/errors.hpp"

namespace fastprotect {

void Countermeasure::validate() const {
  switch (kind) {
    case Kind::gaussian_noise:
      if (!(param >= 0.0) || !std::isfinite(param)) throw ConfigError("noise sigma must be >= 0");
      break;
    case Kind::jpeg:
      if (param < 1.0 || param > 100.0 || param != std::floor(param)) {
        throw ConfigError("jpeg quality must be an integer in [1,100]");
      }
      break;
    case Kind::resize_roundtrip:
      if (!(param > 0.0 && param <= 1.0)) throw ConfigError("resize scale must be in (0,1]");
      break;
  }
}

std::string Countermeasure::to_string() const {
  char buf[64];
  switch (kind) {
    case Kind::gaussian_noise: std::snprintf(buf, sizeof buf, "noise:%g", param); break;
    case Kind::jpeg: std::snprintf(buf, sizeof buf, "jpeg:%d", static_cast<int>(param)); break;
    case Kind::resize_roundtrip: std::snprintf(buf, sizeof buf, "resize:%g", param); break;
  }
  return buf;
}

Countermeasure Countermeasure::parse(std::string_view spec) {
  const auto colon = spec.find(':');
  if (colon == std::string_view::npos) throw ConfigError("countermeasure must look like kind:value");
  const std::string_view kind = spec.substr(0, colon);
  const std::string value(spec.substr(colon + 1));
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("bad countermeasure value '" + value + "'");
  }
  Countermeasure cm;
  if (kind == "noise" || kind == "gaussian_noise") {
    cm = gaussian_noise(v);
  } else if (kind == "jpeg") {
    cm = {Kind::jpeg, v};
  } else if (kind == "resize" || kind == "resize_roundtrip") {
    cm = resize_roundtrip(v);
  } else {
    throw ConfigError("unknown countermeasure '" + std::string(kind) + "'");
  }
  cm.validate();
  return cm;
}

Image apply_countermeasure(const Image& x_hat, const Countermeasure& cm, std::uint64_t seed) {
  cm.validate();
  switch (cm.kind) {
    case Countermeasure::Kind::gaussian_noise: {
      if (cm.param == 0.0) return x_hat;
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> noise(0.0, cm.param);
      Tensor t = x_hat.pixels();
      for (double& v : t.data()) v += noise(rng);
      return Image::clamped(std::move(t), x_hat.id());
    }
    case Countermeasure::Kind::jpeg:
      return jpeg_roundtrip(x_hat, static_cast<int>(cm.param));
    case Countermeasure::Kind::resize_roundtrip: {
      const auto h = x_hat.height();
      const auto w = x_hat.width();
      const auto sh = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(h * cm.param)));
      const auto sw = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(w * cm.param)));
      const Tensor small = resize_bilinear(x_hat.pixels(), sh, sw);
      return Image::clamped(resize_bilinear(small, h, w), x_hat.id());
    }
  }
  return x_hat;
}

}  // namespace fastprotect
