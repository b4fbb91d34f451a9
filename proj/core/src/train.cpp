// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <random>

#include "fastprotect/errors.hpp"
#include "fastprotect/mop.hpp"

namespace fastprotect {

Tensor PerturbationBank::combined(int cluster) const {
  if (cluster < 0 || cluster >= k()) throw ConfigError("cluster index " + std::to_string(cluster) + " out of range");
  return delta_g.values + deltas[static_cast<std::size_t>(cluster)].values;
}

bool PerturbationBank::within_bounds() const {
  if (!delta_g.within_bound()) return false;
  return std::all_of(deltas.begin(), deltas.end(), [](const Perturbation& p) { return p.within_bound(); });
}

double half_budget_bound(int eta) { return float_floor(eta / 255.0 / 2.0); }

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("training steps must be at least 1");
  if (k < 1) throw ConfigError("K must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (eta <= 0) throw ConfigError("eta must be positive");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must be in [0,1)");
  if (base_resolution < kMinImageSide) throw ConfigError("base resolution must be at least 64");
  loss.validate();
}

namespace {

class Adam {
 public:
  explicit Adam(std::size_t size) : m_(size, 0.0), v_(size, 0.0) {}

  void step(std::span<double> param, std::span<const double> grad, const TrainConfig& cfg) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg.beta2, t_);
    for (std::size_t i = 0; i < param.size(); ++i) {
      m_[i] = cfg.beta1 * m_[i] + (1.0 - cfg.beta1) * grad[i];
      v_[i] = cfg.beta2 * v_[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
      const double m_hat = m_[i] / c1;
      const double v_hat = v_[i] / c2;
      param[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.adam_epsilon);
    }
  }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  int t_ = 0;
};

// Clamp to the half-budget ball and keep values on the float32 grid so that
// the bundle round trip is exact.
void project_component(Perturbation& p) {
  for (double& v : p.values.data()) v = std::clamp(v, -p.bound, p.bound);
  round_to_float(p.values.data());
}

void check_data(std::span<const Image> data, std::size_t resolution) {
  if (data.empty()) throw ConfigError("training data is empty");
  for (const auto& img : data) {
    if (img.height() != resolution || img.width() != resolution) {
      throw ShapeError("training image " + img.id() + " is " + img.pixels().shape_string() + ", expected 3x" +
                       std::to_string(resolution) + "x" + std::to_string(resolution));
    }
  }
}

// Descent-view loss of clamp(x + delta) and its gradient w.r.t. delta,
// accumulated into `grad`. The clamp passes gradient only where inactive.
double accumulate_gradient(const Encoder& encoder, const Image& x, const Tensor& delta, const LossFn& loss,
                           Tensor& grad, int step) {
  Tensor protected_pixels = x.pixels() + delta;
  auto pp = protected_pixels.data();
  std::vector<bool> active(pp.size());
  for (std::size_t i = 0; i < pp.size(); ++i) {
    active[i] = pp[i] < 0.0 || pp[i] > 1.0;
    pp[i] = std::clamp(pp[i], 0.0, 1.0);
  }
  ValueAndGradient vg;
  try {
    vg = encoder.value_and_gradient(protected_pixels, loss);
  } catch (const NumericError& e) {
    throw NumericError(e.what(), "step " + std::to_string(step));
  }
  auto g = grad.data();
  const auto dg = vg.gradient.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!active[i]) g[i] += dg[i];
  }
  return vg.value;
}

class BatchSampler {
 public:
  BatchSampler(std::uint64_t seed, std::size_t n) : rng_(seed), dist_(0, n - 1) {}
  std::vector<std::size_t> next(int batch) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(batch));
    for (auto& i : idx) i = dist_(rng_);
    return idx;
  }

 private:
  std::mt19937_64 rng_;
  std::uniform_int_distribution<std::size_t> dist_;
};

void check_finite_loss(double loss, int step) {
  if (!std::isfinite(loss)) throw NumericError("non-finite training loss", "step " + std::to_string(step));
}

}  // namespace

PerturbationBank train_bank(const Encoder& encoder, std::span<const Image> data, const TargetLatents& target,
                            const CentroidSet& centroids, const TrainConfig& cfg, const TrainObserver& observer) {
  cfg.validate();
  check_data(data, cfg.base_resolution);
  if (centroids.k != cfg.k) {
    throw ConfigError("centroid set has K=" + std::to_string(centroids.k) + " but config asks for K=" +
                      std::to_string(cfg.k));
  }

  std::vector<int> labels(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) labels[i] = assign(encoder.encode(data[i]).latent, centroids);

  const std::size_t res = cfg.base_resolution;
  const double bound = half_budget_bound(cfg.eta);
  PerturbationBank bank{Perturbation::zeros(res, bound), {}, cfg.eta, target.target_id, res};
  bank.deltas.assign(static_cast<std::size_t>(cfg.k), Perturbation::zeros(res, bound));

  const LossFn loss = mlp_loss_fn(target, cfg.loss, LossView::descent);
  const std::size_t n = bank.delta_g.values.size();
  Adam global_opt(n);
  std::vector<Adam> cluster_opt(static_cast<std::size_t>(cfg.k), Adam(n));
  BatchSampler sampler(cfg.seed, data.size());
  const double inv_batch = 1.0 / cfg.batch_size;

  for (int step = 0; step < cfg.steps; ++step) {
    Tensor global_grad(3, res, res);
    std::vector<Tensor> cluster_grad(static_cast<std::size_t>(cfg.k));
    double batch_loss = 0.0;
    for (std::size_t idx : sampler.next(cfg.batch_size)) {
      const auto k = static_cast<std::size_t>(labels[idx]);
      if (cluster_grad[k].empty()) cluster_grad[k] = Tensor(3, res, res);
      Tensor image_grad(3, res, res);
      batch_loss += accumulate_gradient(encoder, data[idx], bank.combined(static_cast<int>(k)), loss, image_grad, step);
      global_grad += image_grad;
      cluster_grad[k] += image_grad;
    }
    batch_loss *= inv_batch;
    check_finite_loss(batch_loss, step);

    if (cfg.train_global) {
      global_grad *= inv_batch;
      global_opt.step(bank.delta_g.values.data(), global_grad.data(), cfg);
      project_component(bank.delta_g);
    }
    // Components with no sample in this batch receive no update at all.
    for (std::size_t k = 0; k < cluster_grad.size(); ++k) {
      if (cluster_grad[k].empty()) continue;
      cluster_grad[k] *= inv_batch;
      cluster_opt[k].step(bank.deltas[k].values.data(), cluster_grad[k].data(), cfg);
      project_component(bank.deltas[k]);
    }
    if (observer) observer(step, batch_loss, bank);
  }
  return bank;
}

Perturbation train_uap(const Encoder& encoder, std::span<const Image> data, const TargetLatents& target,
                       const TrainConfig& cfg, double bound, const TrainObserver& observer) {
  cfg.validate();
  check_data(data, cfg.base_resolution);
  if (!(bound > 0.0)) throw ConfigError("UAP bound must be positive");

  const std::size_t res = cfg.base_resolution;
  Perturbation delta = Perturbation::zeros(res, bound);
  const LossFn loss = mlp_loss_fn(target, cfg.loss, LossView::descent);
  Adam opt(delta.values.size());
  BatchSampler sampler(cfg.seed, data.size());
  const double inv_batch = 1.0 / cfg.batch_size;

  for (int step = 0; step < cfg.steps; ++step) {
    Tensor grad(3, res, res);
    double batch_loss = 0.0;
    for (std::size_t idx : sampler.next(cfg.batch_size)) {
      Tensor image_grad(3, res, res);
      batch_loss += accumulate_gradient(encoder, data[idx], delta.values, loss, image_grad, step);
      grad += image_grad;
    }
    batch_loss *= inv_batch;
    check_finite_loss(batch_loss, step);
    grad *= inv_batch;
    opt.step(delta.values.data(), grad.data(), cfg);
    project_component(delta);
    if (observer) {
      PerturbationBank view{Perturbation::zeros(res, bound), {delta}, cfg.eta, target.target_id, res};
      observer(step, batch_loss, view);
    }
  }
  return delta;
}

double mean_training_loss(const Encoder& encoder, std::span<const Image> data, const TargetLatents& target,
                          const LossConfig& loss_cfg, const std::function<Tensor(std::size_t)>& perturbation_for) {
  if (data.empty()) throw ConfigError("no data to evaluate");
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Image protected_image = Image::clamped(data[i].pixels() + perturbation_for(i));
    total -= mlp_loss(encoder, protected_image, target, loss_cfg);
  }
  return total / static_cast<double>(data.size());
}

void MoPModel::validate() const {
  for (const auto& b : banks) {
    if (b.k() != banks[0].k() || b.eta != banks[0].eta || b.base_resolution != banks[0].base_resolution) {
      throw FormatError("model banks disagree on K, eta or base resolution");
    }
    if (b.k() != centroids.k) throw FormatError("bank K does not match centroid count");
  }
}

namespace {

TargetSummary summarize(const TargetSpec& spec) {
  TargetSummary s{spec.level, spec.seed, spec.entropy, spec.latents.z_y};
  round_to_float(s.z_y.z.data());
  return s;
}

EncoderConfig config_of(const Encoder& encoder) {
  if (const auto* conv = dynamic_cast<const ConvEncoder*>(&encoder)) return conv->config();
  return {};
}

}  // namespace

MoPModel train_model(const Encoder& encoder, std::span<const Image> data, const std::array<TargetSpec, 3>& targets,
                     const TrainConfig& cfg) {
  cfg.validate();
  check_data(data, cfg.base_resolution);

  std::vector<LatentCode> latents;
  latents.reserve(data.size());
  for (const auto& img : data) latents.push_back(encoder.encode(img).latent);
  CentroidSet centroids = fit_assignment(latents, cfg.k, cfg.seed);
  for (auto& c : centroids.centroids) round_to_float(c);

  MoPModel model;
  model.centroids = centroids;
  model.encoder_fp = encoder.fingerprint();
  model.encoder_cfg = config_of(encoder);
  model.train_meta = {cfg.steps, cfg.lr, cfg.beta1, cfg.beta2, cfg.batch_size, cfg.seed, cfg.loss.lambda_ml,
                      cfg.loss.layer_names};
  for (const auto& spec : targets) {
    const auto slot = static_cast<std::size_t>(spec.level);
    TrainConfig bank_cfg = cfg;
    bank_cfg.seed = cfg.seed + 1 + slot;
    model.banks[slot] = train_bank(encoder, data, spec.latents, model.centroids, bank_cfg);
    model.targets[slot] = summarize(spec);
  }
  model.validate();
  return model;
}

MoPModel zero_model(const Encoder& encoder, const std::array<TargetSpec, 3>& targets, const CentroidSet& centroids,
                    int eta, std::size_t base_resolution) {
  MoPModel model;
  model.centroids = centroids;
  model.encoder_fp = encoder.fingerprint();
  model.encoder_cfg = config_of(encoder);
  const double bound = half_budget_bound(eta);
  for (const auto& spec : targets) {
    const auto slot = static_cast<std::size_t>(spec.level);
    PerturbationBank bank{Perturbation::zeros(base_resolution, bound), {}, eta, spec.level, base_resolution};
    bank.deltas.assign(static_cast<std::size_t>(centroids.k), Perturbation::zeros(base_resolution, bound));
    model.banks[slot] = std::move(bank);
    model.targets[slot] = summarize(spec);
  }
  model.validate();
  return model;
}

void check_compatible(const MoPModel& model, const Encoder& encoder) {
  if (model.encoder_fp != encoder.fingerprint()) {
    throw CompatibilityError("model was trained with encoder " + model.encoder_fp.substr(0, 12) +
                             " but the runtime encoder is " + encoder.fingerprint().substr(0, 12));
  }
}

}  // namespace fastprotect
