// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastprotect/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fastprotect/datasets.hpp"
#include "fastprotect/errors.hpp"
#include "fastprotect/metrics.hpp"

namespace fastprotect {

namespace {

constexpr std::uint64_t kHoldoutSeedOffset = 7919;
constexpr double kReachTolerance = 1e-5;

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::vector<int> cluster_labels(const Encoder& encoder, std::span<const Image> data, const CentroidSet& cs) {
  std::vector<int> labels;
  labels.reserve(data.size());
  for (const auto& img : data) labels.push_back(assign(encoder.encode(img).latent, cs));
  return labels;
}

CentroidSet fit_on(const Encoder& encoder, std::span<const Image> data, int k, std::uint64_t seed) {
  std::vector<LatentCode> latents;
  latents.reserve(data.size());
  for (const auto& img : data) latents.push_back(encoder.encode(img).latent);
  return fit_assignment(latents, k, seed);
}

struct SeedData {
  std::vector<Image> train;
  std::vector<Image> holdout;
};

SeedData make_data(const AblationConfig& cfg, std::uint64_t seed) {
  const std::size_t res = cfg.train.base_resolution;
  return {synthetic::images_of(synthetic::blob_dataset(cfg.train_images, cfg.clusters, res, seed)),
          synthetic::images_of(
              synthetic::blob_dataset(cfg.holdout_images, cfg.clusters, res, seed + kHoldoutSeedOffset))};
}

TrainConfig seeded(const TrainConfig& base, std::uint64_t seed) {
  TrainConfig t = base;
  t.seed = seed;
  return t;
}

AblationReport uap_vs_mop(const Encoder& encoder, const AblationConfig& cfg) {
  AblationReport r{"uap_vs_mop", cfg.seeds, {{"uap", {}, {}}, {"mop", {}, {}}}, {}, {}};
  bool all = true;
  for (std::uint64_t seed : cfg.seeds) {
    const SeedData d = make_data(cfg, seed);
    const TargetLatents tgt =
        make_target_spec(encoder, TargetLevel::mid, cfg.target_seed, cfg.train.base_resolution).latents;
    TrainConfig t = seeded(cfg.train, seed);
    t.k = cfg.clusters;
    const UapMopComparison c = compare_uap_mop(encoder, d.train, tgt, t);
    r.arms[0].train_loss.push_back(c.uap_loss);
    r.arms[0].proxy.push_back(c.uap_proxy);
    r.arms[1].train_loss.push_back(c.mop_loss);
    r.arms[1].proxy.push_back(c.mop_proxy);
    all = all && c.mop_wins();
  }
  r.verdicts["mop_beats_uap_all_seeds"] = all;
  return r;
}

AblationReport k_sweep(const Encoder& encoder, const AblationConfig& cfg) {
  AblationReport r{"k_sweep", cfg.seeds, {}, {}, {}};
  for (int k : cfg.k_values) r.arms.push_back({"k=" + std::to_string(k), {}, {}});
  for (std::uint64_t seed : cfg.seeds) {
    const SeedData d = make_data(cfg, seed);
    const TargetLatents tgt =
        make_target_spec(encoder, TargetLevel::mid, cfg.target_seed, cfg.train.base_resolution).latents;
    for (std::size_t a = 0; a < cfg.k_values.size(); ++a) {
      TrainConfig t = seeded(cfg.train, seed);
      t.k = cfg.k_values[a];
      const CentroidSet cs = fit_on(encoder, d.train, t.k, seed);
      const PerturbationBank bank = train_bank(encoder, d.train, tgt, cs, t);
      const auto labels = cluster_labels(encoder, d.train, cs);
      const auto holdout_labels = cluster_labels(encoder, d.holdout, cs);
      r.arms[a].train_loss.push_back(mean_training_loss(encoder, d.train, tgt, t.loss, [&](std::size_t i) {
        return bank.combined(labels[i]);
      }));
      r.arms[a].proxy.push_back(mean_protection_proxy(encoder, d.holdout, tgt.z_y, [&](std::size_t i) {
        return bank.combined(holdout_labels[i]);
      }));
    }
  }
  const auto smallest = std::min_element(cfg.k_values.begin(), cfg.k_values.end()) - cfg.k_values.begin();
  const auto largest = std::max_element(cfg.k_values.begin(), cfg.k_values.end()) - cfg.k_values.begin();
  r.verdicts["largest_k_beats_smallest_k"] =
      r.arms[static_cast<std::size_t>(largest)].mean_proxy() > r.arms[static_cast<std::size_t>(smallest)].mean_proxy();
  return r;
}

AblationReport target_sweep(const Encoder& encoder, const AblationConfig& cfg) {
  AblationReport r{"target_sweep", cfg.seeds, {{"low", {}, {}}, {"mid", {}, {}}, {"high", {}, {}}, {"adaptive", {}, {}}},
                   {}, {}};
  const std::size_t res = cfg.train.base_resolution;
  SelectionTrend trend;
  std::array<TargetEntropy, 3> entropies{};
  const auto full = make_targets(encoder, cfg.target_seed, cfg.selection_resolution);
  for (std::size_t i = 0; i < 3; ++i) entropies[i] = {kTargetLevels[i], full[i].entropy};
  for (std::uint64_t seed : cfg.seeds) {
    const SeedData d = make_data(cfg, seed);
    const auto targets = make_targets(encoder, cfg.target_seed, res);
    const MoPModel model = train_model(encoder, d.train, targets, seeded(cfg.train, seed));
    for (std::size_t a = 0; a < r.arms.size(); ++a) {
      ProtectOptions opts;
      opts.adaptive_strength = false;
      if (a < 3) opts.fixed_target = kTargetLevels[a];
      std::vector<double> proxies;
      for (const Image& x : d.holdout) {
        const ProtectionResult p = protect(encoder, model, x, opts);
        proxies.push_back(
            measure(encoder, Original{x}, Protected{p.protected_image}, model.target(p.target).z_y).protection_proxy);
      }
      r.arms[a].proxy.push_back(mean_of(proxies));
    }
    const SelectionTrend s = selection_trend(encoder, entropies, cfg.selection_cases, seed, cfg.selection_resolution);
    trend.flat_total += s.flat_total;
    trend.flat_low += s.flat_low;
    trend.textured_total += s.textured_total;
    trend.textured_high += s.textured_high;
  }
  const double worst_fixed = std::min({r.arms[0].mean_proxy(), r.arms[1].mean_proxy(), r.arms[2].mean_proxy()});
  r.values["flat_selects_low_rate"] = trend.flat_rate();
  r.values["textured_selects_high_rate"] = trend.textured_rate();
  r.verdicts["adaptive_not_worst"] = r.arms[3].mean_proxy() >= worst_fixed;
  r.verdicts["flat_selects_low"] = trend.flat_rate() >= 0.9;
  r.verdicts["textured_selects_high"] = trend.textured_rate() >= 0.9;
  return r;
}

AblationReport warm_start(const Encoder& encoder, const AblationConfig& cfg) {
  AblationReport r{"warm_start", cfg.seeds, {{"cold", {}, {}}, {"warm", {}, {}}}, {}, {}};
  const std::size_t res = cfg.train.base_resolution;
  int within = 0;
  int total = 0;
  for (std::uint64_t seed : cfg.seeds) {
    const SeedData d = make_data(cfg, seed);
    const MoPModel model = train_model(encoder, d.train, make_targets(encoder, cfg.target_seed, res), seeded(cfg.train, seed));
    const std::size_t n = std::min(cfg.warm_images, d.holdout.size());
    const auto cases = warm_start_study(encoder, model, std::span(d.holdout).first(n), cfg.pgd, cfg.train.loss);
    std::vector<double> cold;
    std::vector<double> warm;
    for (const auto& c : cases) {
      cold.push_back(c.cold_steps);
      warm.push_back(c.warm_steps);
      within += c.warm_steps <= cfg.warm_step_limit ? 1 : 0;
      ++total;
    }
    r.arms[0].proxy.push_back(mean_of(cold));
    r.arms[1].proxy.push_back(mean_of(warm));
  }
  const double rate = total ? static_cast<double>(within) / total : 0.0;
  r.values["warm_within_limit_rate"] = rate;
  r.values["mean_cold_steps"] = r.arms[0].mean_proxy();
  r.values["mean_warm_steps"] = r.arms[1].mean_proxy();
  r.verdicts["warm_reaches_cold_final_within_limit"] = rate >= cfg.warm_success_rate;
  r.verdicts["warm_faster_than_cold"] = r.arms[1].mean_proxy() < r.arms[0].mean_proxy();
  return r;
}

}  // namespace

double mean_protection_proxy(const Encoder& encoder, std::span<const Image> images, const LatentCode& target,
                             const std::function<Tensor(std::size_t)>& perturbation_for) {
  std::vector<double> proxies;
  proxies.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& x = images[i];
    const Tensor delta = resize_bilinear(perturbation_for(i), x.height(), x.width());
    const Image x_hat = Image::clamped(x.pixels() + delta, x.id());
    proxies.push_back(measure(encoder, Original{x}, Protected{x_hat}, target).protection_proxy);
  }
  return mean_of(proxies);
}

UapMopComparison compare_uap_mop(const Encoder& encoder, std::span<const Image> data, const TargetLatents& target,
                                 const TrainConfig& cfg) {
  const CentroidSet cs = fit_on(encoder, data, cfg.k, cfg.seed);
  const PerturbationBank bank = train_bank(encoder, data, target, cs, cfg);
  const auto labels = cluster_labels(encoder, data, cs);
  const Perturbation uap = train_uap(encoder, data, target, cfg, float_floor(cfg.eta / 255.0));

  UapMopComparison c;
  const auto mop_delta = [&](std::size_t i) { return bank.combined(labels[i]); };
  const auto uap_delta = [&](std::size_t) { return uap.values; };
  c.mop_loss = mean_training_loss(encoder, data, target, cfg.loss, mop_delta);
  c.uap_loss = mean_training_loss(encoder, data, target, cfg.loss, uap_delta);
  c.mop_proxy = mean_protection_proxy(encoder, data, target.z_y, mop_delta);
  c.uap_proxy = mean_protection_proxy(encoder, data, target.z_y, uap_delta);
  return c;
}

SelectionTrend selection_trend(const Encoder& encoder, std::span<const TargetEntropy> targets, int count,
                               std::uint64_t seed, std::size_t resolution) {
  SelectionTrend t;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = seed * 1000 + static_cast<std::uint64_t>(i);
    const double flat = latent_entropy(encoder.encode(synthetic::flat_image(resolution, s)).latent);
    const double textured = latent_entropy(encoder.encode(synthetic::textured_image(resolution, s)).latent);
    ++t.flat_total;
    ++t.textured_total;
    t.flat_low += select_target(flat, targets) == TargetLevel::low ? 1 : 0;
    t.textured_high += select_target(textured, targets) == TargetLevel::high ? 1 : 0;
  }
  return t;
}

int steps_to_threshold(std::span<const double> losses, double threshold) {
  const auto it = std::find_if(losses.begin(), losses.end(), [&](double v) { return v >= threshold; });
  return static_cast<int>(it - losses.begin());
}

std::vector<WarmStartCase> warm_start_study(const Encoder& encoder, const MoPModel& model,
                                            std::span<const Image> images, const Budget& budget,
                                            const LossConfig& loss, const ProtectOptions& opts) {
  std::vector<WarmStartCase> out;
  for (const Image& x : images) {
    const ProtectionResult p = protect(encoder, model, x, opts);
    const TargetSummary& summary = model.target(p.target);
    if (x.height() != x.width()) throw ShapeError("warm-start study needs square images");
    const TargetLatents tgt = make_target_spec(encoder, p.target, summary.seed, x.height()).latents;
    const PgdTrace cold = pgd_protect_traced(encoder, x, tgt, budget, loss);
    // The strength map may push single pixels past eta; PGD starts inside the ball.
    Perturbation init{project_linf(p.protected_image.pixels() - x.pixels(), budget.eta_float()), budget.eta_float()};
    const PgdTrace warm = pgd_protect_traced(encoder, x, tgt, budget, loss, init);
    WarmStartCase c;
    c.id = x.id();
    c.cold_final = cold.losses.back();
    // Near the optimum a few pixels keep flipping sign; count a loss within
    // that noise of the final value as reached.
    const double threshold = c.cold_final - kReachTolerance * std::abs(c.cold_final);
    c.cold_steps = steps_to_threshold(cold.losses, threshold);
    c.warm_steps = steps_to_threshold(warm.losses, threshold);
    out.push_back(std::move(c));
  }
  return out;
}

AblationConfig::AblationConfig() {
  train.base_resolution = 64;
  train.k = clusters;
}

void AblationConfig::validate() const {
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  if (train_images < static_cast<std::size_t>(std::max(clusters, 8))) throw ConfigError("too few training images");
  if (holdout_images == 0) throw ConfigError("holdout must be nonempty");
  if (k_values.empty()) throw ConfigError("k sweep needs at least one K");
  if (selection_cases < 1) throw ConfigError("selection cases must be positive");
  train.validate();
  pgd.validate();
}

double AblationArm::mean_proxy() const { return mean_of(proxy); }
double AblationArm::mean_train_loss() const { return mean_of(train_loss); }

bool AblationReport::passed() const {
  return std::all_of(verdicts.begin(), verdicts.end(), [](const auto& kv) { return kv.second; });
}

std::string AblationReport::to_json() const {
  nlohmann::ordered_json j;
  j["ablation"] = name;
  j["seeds"] = seeds;
  auto arms_json = nlohmann::ordered_json::array();
  for (const auto& a : arms) {
    nlohmann::ordered_json aj;
    aj["name"] = a.name;
    aj["proxy"] = a.proxy;
    aj["mean_proxy"] = a.mean_proxy();
    if (!a.train_loss.empty()) {
      aj["train_loss"] = a.train_loss;
      aj["mean_train_loss"] = a.mean_train_loss();
    }
    arms_json.push_back(std::move(aj));
  }
  j["arms"] = std::move(arms_json);
  j["values"] = values;
  j["verdicts"] = verdicts;
  j["verdict"] = passed() ? "pass" : "fail";
  return j.dump(2);
}

AblationReport run_ablation(std::string_view name, const Encoder& encoder, const AblationConfig& cfg) {
  cfg.validate();
  if (name == "uap_vs_mop") return uap_vs_mop(encoder, cfg);
  if (name == "k_sweep") return k_sweep(encoder, cfg);
  if (name == "target_sweep") return target_sweep(encoder, cfg);
  if (name == "warm_start") return warm_start(encoder, cfg);
  throw ConfigError("unknown ablation '" + std::string(name) + "'");
}

}  // namespace fastprotect
