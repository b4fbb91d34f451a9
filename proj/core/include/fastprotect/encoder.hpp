// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "fastprotect/image.hpp"
#include "fastprotect/tensor.hpp"

namespace fastprotect {

struct LatentCode {
  Tensor z;
};

struct FeatureLayer {
  std::string name;
  Tensor feature;
};

/// Intermediate encoder features ordered shallow to deep.
struct FeaturePyramid {
  std::vector<FeatureLayer> layers;

  /// Returns nullptr when absent.
  const FeatureLayer* find(const std::string& name) const;
  std::vector<std::string> names() const;
};

struct Encoding {
  LatentCode latent;
  FeaturePyramid pyramid;
};

/// Gradient of a scalar loss with respect to the encoder outputs. `pyramid`
/// holds one tensor per pyramid layer (same order); an empty tensor means the
/// loss does not depend on that layer.
struct OutputGradient {
  double value = 0.0;
  Tensor latent;
  std::vector<Tensor> pyramid;
};

/// A loss over encoder outputs that also reports its gradient.
using LossFn = std::function<OutputGradient(const LatentCode&, const FeaturePyramid&)>;

struct ValueAndGradient {
  double value = 0.0;
  Tensor gradient;  // 3×H×W
  Encoding encoding;
};

struct EncoderConfig {
  std::uint64_t seed = 0;
  int num_stages = 4;
  int base_channels = 16;
  int latent_channels = 4;
  int downsample_factor = 8;

  /// Throws ConfigError.
  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Differentiable image encoder. Implementations are immutable after
/// construction and safe to call concurrently.
class Encoder {
 public:
  virtual ~Encoder() = default;

  /// Input side lengths must be divisible by downsample_factor().
  virtual Encoding encode(const Tensor& x) const = 0;
  /// Loss value and d loss / d x. Throws NumericError naming the layer whose
  /// back-propagated gradient became non-finite.
  virtual ValueAndGradient value_and_gradient(const Tensor& x, const LossFn& loss) const = 0;
  virtual std::string fingerprint() const = 0;
  virtual int downsample_factor() const = 0;
  virtual std::vector<std::string> layer_names() const = 0;

  Encoding encode(const Image& img) const { return encode(img.pixels()); }
  Tensor input_gradient(const Image& img, const LossFn& loss) const {
    return value_and_gradient(img.pixels(), loss).gradient;
  }

  /// Instrumentation: forward passes run so far, in total and per input size.
  std::uint64_t forward_count() const;
  std::uint64_t forward_count_at(std::size_t height, std::size_t width) const;
  void reset_counters() const;

 protected:
  void count_forward(std::size_t height, std::size_t width) const;

 private:
  mutable std::mutex counter_mutex_;
  mutable std::map<std::pair<std::size_t, std::size_t>, std::uint64_t> forwards_;
};

/// Frozen random convolutional encoder: stride-2 3×3 stages "down_1".."down_{S-1}",
/// a stride-1 "mid_0" stage, SiLU activations and a 1×1 projection to the latent.
class ConvEncoder final : public Encoder {
 public:
  explicit ConvEncoder(EncoderConfig cfg);

  using Encoder::encode;

  Encoding encode(const Tensor& x) const override;
  ValueAndGradient value_and_gradient(const Tensor& x, const LossFn& loss) const override;
  std::string fingerprint() const override { return fingerprint_; }
  int downsample_factor() const override { return cfg_.downsample_factor; }
  std::vector<std::string> layer_names() const override;

  const EncoderConfig& config() const noexcept { return cfg_; }

  struct Conv {
    std::string name;
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    bool activation = true;
    bool exposed = true;
    std::vector<double> weights;  // out × (in·k·k), row-major
    std::vector<double> bias;
  };

 private:
  struct Trace;
  Encoding forward(const Tensor& x, Trace* trace) const;

  EncoderConfig cfg_;
  std::vector<Conv> layers_;
  std::string fingerprint_;
};

std::string encoder_fingerprint(const EncoderConfig& cfg);

}  // namespace fastprotect
