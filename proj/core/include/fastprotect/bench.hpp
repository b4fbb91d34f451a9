// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <vector>

#include "fastprotect/encoder.hpp"
#include "fastprotect/losses.hpp"
#include "fastprotect/mop.hpp"
#include "fastprotect/pipeline.hpp"

namespace fastprotect {

struct BenchConfig {
  std::vector<std::size_t> sizes = {256, 512, 1024};
  int repetitions = 5;
  int warmup = 1;
  Budget pgd{8, 2.0, 50};
  LossConfig loss;
  ProtectOptions protect;
  std::uint64_t seed = 0;

  void validate(int downsample_factor) const;
};

struct BenchRow {
  std::size_t size = 0;
  double protect_ms = 0.0;  // median
  double pgd_ms = 0.0;      // median
  double speedup = 0.0;
};

/// Medians of protect() and PGD wall time per square size, warmup excluded.
std::vector<BenchRow> bench_latency(const Encoder& encoder, const MoPModel& model, const BenchConfig& cfg);

void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& out);
void write_bench_csv(const std::vector<BenchRow>& rows, const std::filesystem::path& path);

/// Median of a non-empty sample.
double median(std::vector<double> v);

}  // namespace fastprotect
