// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include <vector>

#include <benchmark/benchmark.h>

#include "fastprotect/assignment.hpp"
#include "fastprotect/datasets.hpp"
#include "fastprotect/encoder.hpp"
#include "fastprotect/losses.hpp"
#include "fastprotect/mop.hpp"
#include "fastprotect/perceptual.hpp"
#include "fastprotect/pipeline.hpp"
#include "fastprotect/targets.hpp"

namespace {

using namespace fastprotect;

const ConvEncoder& encoder() {
  static const ConvEncoder e{EncoderConfig{}};
  return e;
}

const std::array<TargetSpec, 3>& targets(std::size_t side) {
  static const auto t64 = make_targets(encoder(), 0, 64);
  static const auto t512 = make_targets(encoder(), 0);
  return side == 64 ? t64 : t512;
}

void BM_Encode(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const Image x = synthetic::random_image(side, 1);
  for (auto _ : state) benchmark::DoNotOptimize(encoder().encode(x));
}
BENCHMARK(BM_Encode)->Arg(64)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_LossGradient(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const Image x = synthetic::random_image(side, 2);
  const auto loss = mlp_loss_fn(targets(side)[1].latents, LossConfig{});
  for (auto _ : state) benchmark::DoNotOptimize(encoder().value_and_gradient(x.pixels(), loss));
}
BENCHMARK(BM_LossGradient)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_Protect(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  std::vector<LatentCode> latents;
  for (std::uint64_t s = 0; s < 4; ++s) latents.push_back(encoder().encode(synthetic::random_image(512, s)).latent);
  const MoPModel model = zero_model(encoder(), targets(512), fit_assignment(latents, 2, 0), 8, 512);
  const Image x = synthetic::random_image(side, 3);
  for (auto _ : state) benchmark::DoNotOptimize(protect(encoder(), model, x));
}
BENCHMARK(BM_Protect)->Arg(512)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_DecileScale(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const Image x = synthetic::textured_image(side, 4);
  const Image y = synthetic::random_image(side, 5);
  const PerceptualMap inv = normalize_invert(perceptual_map(encoder(), x, y));
  for (auto _ : state) benchmark::DoNotOptimize(decile_scale(inv, ScalingParams{}));
}
BENCHMARK(BM_DecileScale)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
