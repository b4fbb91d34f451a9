// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastprotect/bench.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include "fastprotect/datasets.hpp"
#include "fastprotect/errors.hpp"

namespace fastprotect {

void BenchConfig::validate(int downsample_factor) const {
  if (sizes.empty()) throw ConfigError("bench needs at least one size");
  for (std::size_t s : sizes) {
    if (s < kMinImageSide || s % static_cast<std::size_t>(downsample_factor) != 0) {
      throw ConfigError("bench size " + std::to_string(s) + " must be >= 64 and divisible by " +
                        std::to_string(downsample_factor));
    }
  }
  if (repetitions < 5) throw ConfigError("bench needs at least 5 repetitions");
  if (warmup < 0) throw ConfigError("warmup must be >= 0");
  pgd.validate();
}

double median(std::vector<double> v) {
  if (v.empty()) throw ConfigError("median of empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

template <typename F>
double time_median(int warmup, int reps, F&& f) {
  for (int i = 0; i < warmup; ++i) f();
  std::vector<double> samples;
  for (int i = 0; i < reps; ++i) {
    const auto start = std::chrono::steady_clock::now();
    f();
    samples.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  }
  return median(std::move(samples));
}

}  // namespace

std::vector<BenchRow> bench_latency(const Encoder& encoder, const MoPModel& model, const BenchConfig& cfg) {
  cfg.validate(encoder.downsample_factor());
  std::vector<BenchRow> rows;
  const TargetSummary& summary = model.target(TargetLevel::mid);
  for (std::size_t size : cfg.sizes) {
    const Image x = synthetic::random_image(size, cfg.seed + size);
    const TargetLatents tgt = make_target_spec(encoder, TargetLevel::mid, summary.seed, size).latents;
    BenchRow row;
    row.size = size;
    row.protect_ms = time_median(cfg.warmup, cfg.repetitions, [&] { (void)protect(encoder, model, x, cfg.protect); });
    row.pgd_ms = time_median(cfg.warmup, cfg.repetitions, [&] { (void)pgd_protect(encoder, x, tgt, cfg.pgd, cfg.loss); });
    row.speedup = row.pgd_ms / row.protect_ms;
    rows.push_back(row);
  }
  return rows;
}

void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& out) {
  out << "size,protect_ms,pgd_ms,speedup\n";
  for (const auto& r : rows) out << r.size << ',' << r.protect_ms << ',' << r.pgd_ms << ',' << r.speedup << '\n';
}

void write_bench_csv(const std::vector<BenchRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_bench_csv(rows, out);
}

}  // namespace fastprotect
