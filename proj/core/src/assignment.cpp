// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastprotect/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "fastprotect/errors.hpp"

namespace fastprotect {
namespace {

constexpr int kMaxIterations = 300;
constexpr double kShiftTolerance = 1e-6;

std::size_t nearest(std::span<const double> p, const std::vector<std::vector<double>>& centroids,
                    double* distance = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (distance) *distance = best_d;
  return best;
}

// Arthur & Vassilvitskii D^2 seeding.
std::vector<std::vector<double>> seed_plus_plus(std::span<const std::vector<double>> points, int k,
                                                std::mt19937_64& rng) {
  std::vector<std::vector<double>> centroids;
  std::uniform_int_distribution<std::size_t> first(0, points.size() - 1);
  centroids.push_back(points[first(rng)]);
  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) d2[i] = squared_distance(points[i], centroids[0]);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t chosen = 0;
    if (total > 0.0) {
      double r = unit(rng) * total;
      chosen = points.size() - 1;
      for (std::size_t i = 0; i < points.size(); ++i) {
        r -= d2[i];
        if (r < 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      // All remaining points coincide with a centroid.
      chosen = first(rng);
    }
    centroids.push_back(points[chosen]);
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
    }
  }
  return centroids;
}

}  // namespace

CentroidSet fit_assignment(std::span<const std::vector<double>> points, int k, std::uint64_t seed) {
  if (k < 1) throw ConfigError("K must be at least 1");
  if (points.size() < static_cast<std::size_t>(k)) {
    throw ConfigError("need at least K=" + std::to_string(k) + " samples, got " + std::to_string(points.size()));
  }
  const std::size_t dim = points[0].size();
  for (const auto& p : points) {
    if (p.size() != dim) throw ShapeError("all latents must share one shape");
  }

  std::mt19937_64 rng(seed);
  CentroidSet cs;
  cs.k = k;
  cs.dim = dim;
  cs.seed = seed;
  cs.centroids = seed_plus_plus(points, k, rng);

  std::vector<std::size_t> labels(points.size(), 0);
  std::vector<double> dist(points.size(), 0.0);
  for (int iter = 1; iter <= kMaxIterations; ++iter) {
    cs.iterations = iter;
    for (std::size_t i = 0; i < points.size(); ++i) labels[i] = nearest(points[i], cs.centroids, &dist[i]);

    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto& s = sums[labels[i]];
      for (std::size_t d = 0; d < dim; ++d) s[d] += points[i][d];
      ++counts[labels[i]];
    }
    double shift = 0.0;
    for (int c = 0; c < k; ++c) {
      std::vector<double> next(dim);
      if (counts[c] == 0) {
        const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        next = points[far];
        dist[far] = 0.0;
      } else {
        for (std::size_t d = 0; d < dim; ++d) next[d] = sums[c][d] / static_cast<double>(counts[c]);
      }
      shift = std::max(shift, std::sqrt(squared_distance(next, cs.centroids[c])));
      cs.centroids[c] = std::move(next);
    }
    if (shift < kShiftTolerance) break;
  }

  cs.inertia = 0.0;
  for (const auto& p : points) {
    double d = 0.0;
    nearest(p, cs.centroids, &d);
    cs.inertia += d;
  }
  return cs;
}

CentroidSet fit_assignment(std::span<const LatentCode> latents, int k, std::uint64_t seed) {
  std::vector<std::vector<double>> points;
  points.reserve(latents.size());
  for (const auto& z : latents) {
    if (!latents.empty() && !z.z.same_shape(latents[0].z)) throw ShapeError("all latents must share one shape");
    points.emplace_back(z.z.data().begin(), z.z.data().end());
  }
  return fit_assignment(points, k, seed);
}

int assign(std::span<const double> z, const CentroidSet& cs) {
  if (z.size() != cs.dim) {
    throw ShapeError("latent dimension " + std::to_string(z.size()) + " does not match centroid dimension " +
                     std::to_string(cs.dim));
  }
  return static_cast<int>(nearest(z, cs.centroids));
}

int assign(const LatentCode& z, const CentroidSet& cs) { return assign(z.z.data(), cs); }

}  // namespace fastprotect
