// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastprotect/targets.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "fastprotect/errors.hpp"

namespace fastprotect {

Image generate_target(TargetLevel level, std::uint64_t seed) {
  const std::size_t period = target_period(level);
  const std::size_t tiles = kTargetSide / period;
  std::mt19937_64 rng(seed * 3 + static_cast<std::uint64_t>(level) + 0x9E3779B97F4A7C15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // One complementary colour pair per seed, pushed towards the extremes.
  std::array<double, 3> fg;
  std::array<double, 3> bg;
  for (std::size_t c = 0; c < 3; ++c) {
    const double v = unit(rng);
    fg[c] = v < 0.5 ? 0.15 * v : 1.0 - 0.15 * (1.0 - v);
    bg[c] = 1.0 - fg[c];
  }
  // Motif: a tile split into two horizontal bands; each tile randomly swaps
  // which band is foreground.
  std::vector<bool> flip(tiles * tiles);
  for (std::size_t i = 0; i < flip.size(); ++i) flip[i] = unit(rng) < 0.5;

  Tensor t(3, kTargetSide, kTargetSide);
  const std::size_t half = period / 2;
  for (std::size_t y = 0; y < kTargetSide; ++y) {
    for (std::size_t x = 0; x < kTargetSide; ++x) {
      const bool top = (y % period) < half;
      const bool on = top != flip[(y / period) * tiles + x / period];
      const auto& color = on ? fg : bg;
      for (std::size_t c = 0; c < 3; ++c) t(c, y, x) = color[c];
    }
  }
  return Image(std::move(t), std::string("target_") + std::string(to_string(level)));
}

double latent_entropy(const Tensor& z, int bins) {
  if (bins < 2) throw ConfigError("entropy needs at least 2 bins");
  const auto v = z.data();
  if (v.empty()) return 0.0;
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  if (!(range > 0.0)) return 0.0;

  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (double x : v) {
    const double u = (x - lo) / range;
    const auto b = std::min(static_cast<std::size_t>(u * bins), static_cast<std::size_t>(bins - 1));
    ++counts[b];
  }
  double h = 0.0;
  const double total = static_cast<double>(v.size());
  for (std::size_t n : counts) {
    if (n == 0) continue;
    const double p = static_cast<double>(n) / total;
    h -= p * std::log(p);
  }
  return h;
}

TargetSpec make_target_spec(const Encoder& encoder, TargetLevel level, std::uint64_t seed,
                            std::size_t resolution) {
  Image image = generate_target(level, seed);
  const Image encoder_input = resize_image(image, resolution, resolution);
  TargetLatents latents = make_target_latents(encoder, encoder_input, level);
  const double h = latent_entropy(latents.z_y);
  return {level, seed, std::move(image), std::move(latents), h};
}

std::array<TargetSpec, 3> make_targets(const Encoder& encoder, std::uint64_t seed, std::size_t resolution) {
  std::array<TargetSpec, 3> specs = {make_target_spec(encoder, TargetLevel::low, seed, resolution),
                                     make_target_spec(encoder, TargetLevel::mid, seed, resolution),
                                     make_target_spec(encoder, TargetLevel::high, seed, resolution)};
  if (!(specs[0].entropy < specs[1].entropy && specs[1].entropy < specs[2].entropy)) {
    throw ConfigError("target latent entropies are not strictly increasing with repetition (low " +
                      std::to_string(specs[0].entropy) + ", mid " + std::to_string(specs[1].entropy) +
                      ", high " + std::to_string(specs[2].entropy) + "); choose another encoder or target seed");
  }
  return specs;
}

TargetLevel select_target(double h, std::span<const TargetEntropy> targets) {
  if (targets.empty()) throw ConfigError("no targets to select from");
  const TargetEntropy* best = &targets[0];
  for (const auto& t : targets) {
    const double d = std::abs(h - t.entropy);
    const double best_d = std::abs(h - best->entropy);
    if (d < best_d || (d == best_d && t.level < best->level)) best = &t;
  }
  return best->level;
}

TargetLevel select_target(const LatentCode& z, std::span<const TargetSpec> targets) {
  std::vector<TargetEntropy> entropies;
  for (const auto& t : targets) entropies.push_back({t.level, t.entropy});
  return select_target(latent_entropy(z), entropies);
}

}  // namespace fastprotect
