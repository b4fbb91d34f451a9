// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastprotect/pipeline.hpp"

#include <array>
#include <chrono>

#include "fastprotect/errors.hpp"

namespace fastprotect {

namespace {

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

}  // namespace

ProtectionResult protect(const Encoder& encoder, const MoPModel& model, const Image& x, const ProtectOptions& opts) {
  check_compatible(model, encoder);
  if (x.height() < kMinImageSide || x.width() < kMinImageSide) {
    throw InputError("image " + x.id() + " is smaller than 64 pixels");
  }
  const std::size_t base = model.base_resolution();
  const bool at_base = x.height() == base && x.width() == base;
  StageTiming timing;
  Stopwatch clock;

  const Tensor x_base = at_base ? x.pixels() : resize_bilinear(x.pixels(), base, base);
  const Encoding enc = encoder.encode(x_base);
  timing.encode_ms = clock.lap();

  TargetLevel target = TargetLevel::mid;
  if (opts.fixed_target) {
    target = *opts.fixed_target;
  } else {
    std::array<TargetEntropy, 3> entropies{};
    for (std::size_t i = 0; i < 3; ++i) entropies[i] = {kTargetLevels[i], model.targets[i].entropy};
    target = select_target(latent_entropy(enc.latent), entropies);
  }
  int cluster = 0;
  if (opts.fixed_cluster) {
    cluster = *opts.fixed_cluster;
    if (cluster < 0 || cluster >= model.k()) {
      throw ConfigError("fixed cluster " + std::to_string(cluster) + " out of range for K=" +
                        std::to_string(model.k()));
    }
  } else {
    cluster = assign(enc.latent, model.centroids);
  }
  timing.select_ms = clock.lap();

  const Tensor delta_full = resize_bilinear(model.bank(target).combined(cluster), x.height(), x.width());
  Image surrogate = Image::clamped(x.pixels() + delta_full, x.id());
  timing.resize_ms = clock.lap();

  ProtectionResult result{std::move(surrogate), target, cluster, 0.0, {}, std::nullopt};
  if (opts.adaptive_strength) {
    PerceptualMap raw = at_base
                            ? perceptual_map(enc.pyramid, encoder.encode(result.protected_image.pixels()).pyramid,
                                             x.height(), x.width())
                            : perceptual_map(encoder, x, result.protected_image);
    PerceptualMap scaled = decile_scale(normalize_invert(raw), opts.scaling);
    timing.map_ms = clock.lap();
    result.protected_image = apply_strength(x, delta_full, scaled);
    if (opts.keep_map) result.map = std::move(scaled);
  }
  result.effective_linf = max_abs((result.protected_image.pixels() - x.pixels()).data());
  timing.apply_ms = clock.lap();
  result.timing = timing;
  return result;
}

std::vector<BatchOutcome> protect_batch(const Encoder& encoder, const MoPModel& model, std::span<const Image> xs,
                                        const ProtectOptions& opts) {
  std::vector<BatchOutcome> out;
  out.reserve(xs.size());
  for (const Image& x : xs) {
    BatchOutcome o{x.id(), std::nullopt, {}};
    try {
      o.result = protect(encoder, model, x, opts);
    } catch (const Error& e) {
      o.error = e.what();
    }
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<BatchOutcome> protect_files(const Encoder& encoder, const MoPModel& model,
                                        std::span<const std::filesystem::path> paths, const ProtectOptions& opts) {
  std::vector<BatchOutcome> out;
  out.reserve(paths.size());
  for (const auto& path : paths) {
    BatchOutcome o{path.string(), std::nullopt, {}};
    try {
      o.result = protect(encoder, model, load_image(path), opts);
    } catch (const Error& e) {
      o.error = e.what();
    }
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace fastprotect
