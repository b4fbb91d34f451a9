// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fastprotect/image.hpp"

namespace fastprotect::synthetic {

/// Independent uniform [0,1] pixels.
Image random_image(std::size_t side, std::uint64_t seed);
/// Constant colour plus mild Gaussian noise (sigma 0.01).
Image flat_image(std::size_t side, std::uint64_t seed);
/// Dense high-frequency texture: per-pixel uniform noise of amplitude 0.8 around a random colour.
Image textured_image(std::size_t side, std::uint64_t seed);
/// Left half flat, right half textured.
Image flat_textured_image(std::size_t side, std::uint64_t seed);

struct LabeledImage {
  Image image;
  int label;
};

/// Images from `clusters` well-separated families (distinct palette, grating
/// orientation and frequency); image i belongs to family i % clusters.
std::vector<LabeledImage> blob_dataset(std::size_t count, int clusters, std::size_t side,
                                       std::uint64_t seed);
std::vector<Image> images_of(const std::vector<LabeledImage>& labeled);

}  // namespace fastprotect::synthetic
