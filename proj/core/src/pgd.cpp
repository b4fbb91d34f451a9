// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "fastprotect/errors.hpp"
#include "fastprotect/losses.hpp"

namespace fastprotect {
namespace {

// Projects `candidate` onto the eta-ball around `origin`, then onto [0,1].
void project_step(std::span<double> candidate, std::span<const double> origin, double eta) {
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    double lo = std::max(origin[i] - eta, 0.0);
    double hi = std::min(origin[i] + eta, 1.0);
    // origin ± eta can round outward; pull the limits back so that the
    // measured |candidate - origin| never exceeds eta.
    while (hi - origin[i] > eta) hi = std::nextafter(hi, 0.0);
    while (origin[i] - lo > eta) lo = std::nextafter(lo, 1.0);
    candidate[i] = std::clamp(candidate[i], lo, hi);
  }
}

PgdTrace run_pgd(const Encoder& encoder, const Image& x, const TargetLatents& tgt, const Budget& budget,
                 const LossConfig& cfg, const std::optional<Perturbation>& init, bool record_final) {
  budget.validate();
  const double eta = budget.eta_float();
  const double step = budget.step_float();
  const LossFn loss = mlp_loss_fn(tgt, cfg, LossView::gain);

  Tensor current = x.pixels();
  if (init) {
    if (max_abs(init->values.data()) > eta) throw ConfigError("PGD warm-start perturbation exceeds eta");
    const Tensor delta = resize_bilinear(init->values, x.height(), x.width());
    current += delta;
    project_step(current.data(), x.pixels().data(), eta);
  }

  PgdTrace trace{x, {}};
  trace.losses.reserve(static_cast<std::size_t>(budget.pgd_steps) + 1);
  for (int i = 0; i < budget.pgd_steps; ++i) {
    ValueAndGradient vg;
    try {
      vg = encoder.value_and_gradient(current, loss);
    } catch (const NumericError& e) {
      throw NumericError(e.what(), "iteration " + std::to_string(i));
    }
    if (!std::isfinite(vg.value)) {
      throw NumericError("non-finite PGD loss", "iteration " + std::to_string(i));
    }
    trace.losses.push_back(vg.value);
    auto cur = current.data();
    const auto grad = vg.gradient.data();
    for (std::size_t j = 0; j < cur.size(); ++j) {
      const double g = grad[j];
      cur[j] += g > 0.0 ? step : (g < 0.0 ? -step : 0.0);
    }
    project_step(cur, x.pixels().data(), eta);
  }
  if (record_final) {
    const Encoding enc = encoder.encode(current);
    trace.losses.push_back(loss(enc.latent, enc.pyramid).value);
  }
  trace.protected_image = Image(std::move(current), x.id());
  return trace;
}

}  // namespace

Image pgd_protect(const Encoder& encoder, const Image& x, const TargetLatents& tgt, const Budget& budget,
                  const LossConfig& cfg, const std::optional<Perturbation>& init) {
  return run_pgd(encoder, x, tgt, budget, cfg, init, false).protected_image;
}

PgdTrace pgd_protect_traced(const Encoder& encoder, const Image& x, const TargetLatents& tgt,
                            const Budget& budget, const LossConfig& cfg,
                            const std::optional<Perturbation>& init) {
  return run_pgd(encoder, x, tgt, budget, cfg, init, true);
}

}  // namespace fastprotect
