// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <vector>

#include "fastprotect/errors.hpp"
#include "fastprotect/image.hpp"

namespace fastprotect {
namespace {

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

// Source sample = (dst + 0.5) * in / out - 0.5, clamped at the borders.
std::vector<Tap> taps(std::size_t in, std::size_t out) {
  std::vector<Tap> result(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    result[i] = {lo, hi, src - static_cast<double>(lo)};
  }
  return result;
}

}  // namespace

Tensor resize_bilinear(const Tensor& t, std::size_t new_height, std::size_t new_width) {
  if (new_height == 0 || new_width == 0) {
    throw ShapeError("resize_bilinear: target size must be positive");
  }
  if (t.empty()) throw ShapeError("resize_bilinear: empty input");
  if (new_height == t.height() && new_width == t.width()) return t;

  const auto ys = taps(t.height(), new_height);
  const auto xs = taps(t.width(), new_width);
  Tensor out(t.channels(), new_height, new_width);
  for (std::size_t c = 0; c < t.channels(); ++c) {
    for (std::size_t y = 0; y < new_height; ++y) {
      const Tap& ty = ys[y];
      for (std::size_t x = 0; x < new_width; ++x) {
        const Tap& tx = xs[x];
        // std::lerp is exact at the endpoints and monotone, so constants and
        // the input range are preserved bit-for-bit.
        const double top = std::lerp(t(c, ty.lo, tx.lo), t(c, ty.lo, tx.hi), tx.frac);
        const double bottom = std::lerp(t(c, ty.hi, tx.lo), t(c, ty.hi, tx.hi), tx.frac);
        out(c, y, x) = std::lerp(top, bottom, ty.frac);
      }
    }
  }
  return out;
}

Image resize_image(const Image& img, std::size_t new_height, std::size_t new_width) {
  return Image::clamped(resize_bilinear(img.pixels(), new_height, new_width), img.id());
}

}  // namespace fastprotect
