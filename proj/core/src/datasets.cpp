// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastprotect/datasets.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace fastprotect::synthetic {
namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

}  // namespace

Image random_image(std::size_t side, std::uint64_t seed) {
  auto rng = make_rng(seed, 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Tensor t(3, side, side);
  for (double& v : t.data()) v = unit(rng);
  return Image(std::move(t), "random_" + std::to_string(seed));
}

Image flat_image(std::size_t side, std::uint64_t seed) {
  auto rng = make_rng(seed, 2);
  std::uniform_real_distribution<double> base(0.2, 0.8);
  std::normal_distribution<double> noise(0.0, 0.01);
  Tensor t(3, side, side);
  for (std::size_t c = 0; c < 3; ++c) {
    const double level = base(rng);
    for (double& v : t.channel(c)) v = level + noise(rng);
  }
  return Image::clamped(std::move(t), "flat_" + std::to_string(seed));
}

Image textured_image(std::size_t side, std::uint64_t seed) {
  auto rng = make_rng(seed, 3);
  std::uniform_real_distribution<double> base(0.4, 0.6);
  std::uniform_real_distribution<double> noise(-0.4, 0.4);
  Tensor t(3, side, side);
  for (std::size_t c = 0; c < 3; ++c) {
    const double level = base(rng);
    for (double& v : t.channel(c)) v = level + noise(rng);
  }
  return Image::clamped(std::move(t), "textured_" + std::to_string(seed));
}

Image flat_textured_image(std::size_t side, std::uint64_t seed) {
  const Image flat = flat_image(side, seed);
  const Image textured = textured_image(side, seed);
  Tensor t = flat.pixels();
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = side / 2; x < side; ++x) t(c, y, x) = textured.pixels()(c, y, x);
    }
  }
  return Image(std::move(t), "flat_textured_" + std::to_string(seed));
}

std::vector<LabeledImage> blob_dataset(std::size_t count, int clusters, std::size_t side, std::uint64_t seed) {
  // Family parameters depend only on the family index so that different
  // dataset seeds (train vs holdout) share the same clusters.
  struct Family {
    std::array<double, 3> color;
    double angle;
    double frequency;
    double amplitude;
  };
  std::vector<Family> families(static_cast<std::size_t>(clusters));
  {
    auto rng = make_rng(0xB10B, 4);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int f = 0; f < clusters; ++f) {
      Family& fam = families[static_cast<std::size_t>(f)];
      for (double& c : fam.color) c = 0.25 + 0.5 * unit(rng);
      fam.angle = std::numbers::pi * f / clusters;
      fam.frequency = 2.0 * std::numbers::pi * (2.0 + 3.0 * f) / 64.0;
      fam.amplitude = 0.15 + 0.05 * f;
    }
  }

  auto rng = make_rng(seed, 5);
  std::uniform_real_distribution<double> jitter(-0.03, 0.03);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 0.01);

  std::vector<LabeledImage> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(clusters));
    const Family& fam = families[static_cast<std::size_t>(label)];
    std::array<double, 3> color;
    for (std::size_t c = 0; c < 3; ++c) color[c] = fam.color[c] + jitter(rng);
    const double ph = phase(rng);
    const double ca = std::cos(fam.angle);
    const double sa = std::sin(fam.angle);
    Tensor t(3, side, side);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double u = ca * static_cast<double>(x) + sa * static_cast<double>(y);
        const double g = fam.amplitude * std::sin(fam.frequency * u + ph);
        for (std::size_t c = 0; c < 3; ++c) t(c, y, x) = color[c] + g + noise(rng);
      }
    }
    out.push_back({Image::clamped(std::move(t), "blob" + std::to_string(label) + "_" + std::to_string(i)), label});
  }
  return out;
}

std::vector<Image> images_of(const std::vector<LabeledImage>& labeled) {
  std::vector<Image> out;
  out.reserve(labeled.size());
  for (const auto& l : labeled) out.push_back(l.image);
  return out;
}

}  // namespace fastprotect::synthetic
