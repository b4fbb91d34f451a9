// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fastprotect/encoder.hpp"

namespace fastprotect {

/// K centroids over flattened latent codes.
struct CentroidSet {
  int k = 0;
  std::size_t dim = 0;
  std::vector<std::vector<double>> centroids;
  std::uint64_t seed = 0;
  double inertia = 0.0;
  int iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations until the largest centroid
/// shift drops below 1e-6 or 300 iterations. Empty clusters are reseeded with
/// the sample farthest from its current centroid. Throws ConfigError when
/// fewer samples than K are given, ShapeError on mixed latent shapes.
CentroidSet fit_assignment(std::span<const LatentCode> latents, int k, std::uint64_t seed);
CentroidSet fit_assignment(std::span<const std::vector<double>> points, int k, std::uint64_t seed);

/// Index of the nearest centroid (Euclidean); ties go to the lowest index.
int assign(std::span<const double> z, const CentroidSet& cs);
int assign(const LatentCode& z, const CentroidSet& cs);

}  // namespace fastprotect
