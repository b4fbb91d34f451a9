// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastprotect/encoder.hpp"

#include <openssl/evp.h>

#include <Eigen/Core>
#include <cmath>
#include <cstring>
#include <random>

#include "fastprotect/errors.hpp"

namespace fastprotect {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

struct ConvGeometry {
  std::size_t in_h, in_w, out_h, out_w;
  int kernel, stride, pad;
};

ConvGeometry geometry(const ConvEncoder::Conv& conv, std::size_t h, std::size_t w) {
  const int pad = conv.kernel / 2;
  ConvGeometry g{h, w, 0, 0, conv.kernel, conv.stride, pad};
  g.out_h = (h + 2 * pad - conv.kernel) / conv.stride + 1;
  g.out_w = (w + 2 * pad - conv.kernel) / conv.stride + 1;
  return g;
}

// Rows are (channel, ky, kx); columns are output positions.
RowMatrix im2col(const Tensor& in, const ConvGeometry& g) {
  const std::size_t k = g.kernel;
  RowMatrix cols(in.channels() * k * k, g.out_h * g.out_w);
  for (std::size_t c = 0; c < in.channels(); ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* row = cols.data() + ((c * k + ky) * k + kx) * g.out_h * g.out_w;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - g.pad;
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = in.channel(c).data() + static_cast<std::size_t>(iy) * g.in_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - g.pad;
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.in_w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
  return cols;
}

Tensor col2im(const RowMatrix& cols, std::size_t channels, const ConvGeometry& g) {
  const std::size_t k = g.kernel;
  Tensor out(channels, g.in_h, g.in_w, 0.0);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* row = cols.data() + ((c * k + ky) * k + kx) * g.out_h * g.out_w;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - g.pad;
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          double* dst = out.channel(c).data() + static_cast<std::size_t>(iy) * g.in_w;
          const double* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - g.pad;
            if (ix >= 0 && ix < static_cast<long>(g.in_w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
  return out;
}

constexpr double kDetailScale = 0.6;

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

std::string to_hex(const unsigned char* bytes, unsigned int n) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(2 * n);
  for (unsigned int i = 0; i < n; ++i) {
    s.push_back(kDigits[bytes[i] >> 4]);
    s.push_back(kDigits[bytes[i] & 0xF]);
  }
  return s;
}

}  // namespace

const FeatureLayer* FeaturePyramid::find(const std::string& name) const {
  for (const auto& layer : layers) {
    if (layer.name == name) return &layer;
  }
  return nullptr;
}

std::vector<std::string> FeaturePyramid::names() const {
  std::vector<std::string> out;
  out.reserve(layers.size());
  for (const auto& layer : layers) out.push_back(layer.name);
  return out;
}

void EncoderConfig::validate() const {
  if (num_stages < 2) throw ConfigError("encoder needs at least 2 stages");
  if (base_channels < 1 || latent_channels < 1) throw ConfigError("encoder channel counts must be positive");
  if (downsample_factor != (1 << (num_stages - 1))) {
    throw ConfigError("downsample_factor must equal 2^(num_stages-1) = " +
                      std::to_string(1 << (num_stages - 1)));
  }
}

std::uint64_t Encoder::forward_count() const {
  std::lock_guard lock(counter_mutex_);
  std::uint64_t total = 0;
  for (const auto& [size, n] : forwards_) total += n;
  return total;
}

std::uint64_t Encoder::forward_count_at(std::size_t height, std::size_t width) const {
  std::lock_guard lock(counter_mutex_);
  const auto it = forwards_.find({height, width});
  return it == forwards_.end() ? 0 : it->second;
}

void Encoder::reset_counters() const {
  std::lock_guard lock(counter_mutex_);
  forwards_.clear();
}

void Encoder::count_forward(std::size_t height, std::size_t width) const {
  std::lock_guard lock(counter_mutex_);
  ++forwards_[{height, width}];
}

struct ConvEncoder::Trace {
  std::vector<ConvGeometry> geometry;
  std::vector<RowMatrix> pre_activation;
};

ConvEncoder::ConvEncoder(EncoderConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);

  // Each kernel is a random channel-mixing weight times a binomial low-pass
  // profile, plus a smaller fully random detail term. The low-pass part keeps
  // flat regions flat in feature space while the detail term gives texture
  // a distinct response.
  auto add = [&](std::string name, int in, int out, int kernel, int stride, bool activation,
                 bool exposed) {
    Conv conv{std::move(name), in, out, kernel, stride, activation, exposed, {}, {}};
    const int taps = kernel * kernel;
    const int fan_in = in * taps;
    std::vector<double> profile(static_cast<std::size_t>(taps), 1.0);
    if (kernel == 3) {
      constexpr double kBinomial[3] = {0.25, 0.5, 0.25};
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) profile[ky * 3 + kx] = kBinomial[ky] * kBinomial[kx];
      }
    }
    std::normal_distribution<double> mixing(0.0, std::sqrt(3.0 / in));
    std::normal_distribution<double> detail(0.0, kDetailScale * std::sqrt(3.0 / fan_in));
    std::normal_distribution<double> bias(0.0, 0.1);
    conv.weights.resize(static_cast<std::size_t>(out) * fan_in);
    for (int o = 0; o < out; ++o) {
      for (int i = 0; i < in; ++i) {
        const double a = mixing(rng);
        for (int t = 0; t < taps; ++t) {
          conv.weights[(static_cast<std::size_t>(o) * in + i) * taps + t] = a * profile[t] + detail(rng);
        }
      }
    }
    conv.bias.resize(out);
    for (double& b : conv.bias) b = bias(rng);
    layers_.push_back(std::move(conv));
  };

  int channels = 3;
  for (int s = 1; s < cfg_.num_stages; ++s) {
    add("down_" + std::to_string(s), channels, cfg_.base_channels, 3, 2, true, true);
    channels = cfg_.base_channels;
  }
  add("mid_0", channels, cfg_.base_channels, 3, 1, true, true);
  add("latent", cfg_.base_channels, cfg_.latent_channels, 1, 1, false, false);

  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  const std::string header = "ConvEncoder/v1 seed=" + std::to_string(cfg_.seed) +
                             " stages=" + std::to_string(cfg_.num_stages) +
                             " base=" + std::to_string(cfg_.base_channels) +
                             " latent=" + std::to_string(cfg_.latent_channels) +
                             " factor=" + std::to_string(cfg_.downsample_factor);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  for (const auto& conv : layers_) {
    EVP_DigestUpdate(ctx, conv.name.data(), conv.name.size());
    EVP_DigestUpdate(ctx, conv.weights.data(), conv.weights.size() * sizeof(double));
    EVP_DigestUpdate(ctx, conv.bias.data(), conv.bias.size() * sizeof(double));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_DigestFinal_ex(ctx, digest, &length);
  EVP_MD_CTX_free(ctx);
  fingerprint_ = to_hex(digest, length);
}

std::vector<std::string> ConvEncoder::layer_names() const {
  std::vector<std::string> names;
  for (const auto& conv : layers_) {
    if (conv.exposed) names.push_back(conv.name);
  }
  return names;
}

Encoding ConvEncoder::encode(const Tensor& x) const { return forward(x, nullptr); }

Encoding ConvEncoder::forward(const Tensor& x, Trace* trace) const {
  const auto factor = static_cast<std::size_t>(cfg_.downsample_factor);
  if (x.channels() != 3) throw ShapeError("encoder input must have 3 channels, got " + x.shape_string());
  if (x.height() == 0 || x.width() == 0 || x.height() % factor != 0 || x.width() % factor != 0) {
    throw ShapeError("encoder input " + x.shape_string() + " is not divisible by " +
                     std::to_string(factor));
  }
  count_forward(x.height(), x.width());

  Encoding out;
  Tensor current = x;
  for (const auto& conv : layers_) {
    const ConvGeometry g = geometry(conv, current.height(), current.width());
    const RowMatrix cols = im2col(current, g);
    const ConstMatrixMap weights(conv.weights.data(), conv.out_channels,
                                 static_cast<Eigen::Index>(conv.in_channels) * conv.kernel * conv.kernel);
    RowMatrix pre(conv.out_channels, g.out_h * g.out_w);
    pre.noalias() = weights * cols;
    for (int o = 0; o < conv.out_channels; ++o) pre.row(o).array() += conv.bias[o];

    Tensor next(conv.out_channels, g.out_h, g.out_w);
    MatrixMap activated(next.data().data(), conv.out_channels, g.out_h * g.out_w);
    if (conv.activation) {
      activated = pre.unaryExpr([](double a) { return a * sigmoid(a); });
    } else {
      activated = pre;
    }
    if (trace) {
      trace->geometry.push_back(g);
      trace->pre_activation.push_back(std::move(pre));
    }
    if (conv.exposed) out.pyramid.layers.push_back({conv.name, next});
    current = std::move(next);
  }
  out.latent.z = std::move(current);
  return out;
}

ValueAndGradient ConvEncoder::value_and_gradient(const Tensor& x, const LossFn& loss) const {
  Trace trace;
  Encoding enc = forward(x, &trace);
  OutputGradient og = loss(enc.latent, enc.pyramid);

  if (!std::isfinite(og.value)) throw NumericError("non-finite loss value", "loss");
  if (og.latent.empty()) og.latent = Tensor(enc.latent.z.channels(), enc.latent.z.height(), enc.latent.z.width());
  if (!og.latent.same_shape(enc.latent.z)) {
    throw ShapeError("latent gradient " + og.latent.shape_string() + " does not match latent " +
                     enc.latent.z.shape_string());
  }
  if (!og.pyramid.empty() && og.pyramid.size() != enc.pyramid.layers.size()) {
    throw ShapeError("pyramid gradient has " + std::to_string(og.pyramid.size()) + " layers, expected " +
                     std::to_string(enc.pyramid.layers.size()));
  }
  if (!all_finite(og.latent.data())) throw NumericError("non-finite gradient", "latent");

  Tensor grad = std::move(og.latent);
  std::size_t pyramid_index = enc.pyramid.layers.size();
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Conv& conv = layers_[li];
    const ConvGeometry& g = trace.geometry[li];
    if (conv.exposed) {
      --pyramid_index;
      if (!og.pyramid.empty() && !og.pyramid[pyramid_index].empty()) {
        const Tensor& extra = og.pyramid[pyramid_index];
        if (!extra.same_shape(grad)) {
          throw ShapeError("gradient for " + conv.name + " has shape " + extra.shape_string() +
                           ", expected " + grad.shape_string());
        }
        if (!all_finite(extra.data())) throw NumericError("non-finite gradient", conv.name);
        grad += extra;
      }
    }
    MatrixMap dout(grad.data().data(), conv.out_channels, g.out_h * g.out_w);
    if (conv.activation) {
      const RowMatrix& pre = trace.pre_activation[li];
      dout.array() *= pre.unaryExpr([](double a) {
        const double s = sigmoid(a);
        return s * (1.0 + a * (1.0 - s));
      }).array();
    }
    const ConstMatrixMap weights(conv.weights.data(), conv.out_channels,
                                 static_cast<Eigen::Index>(conv.in_channels) * conv.kernel * conv.kernel);
    RowMatrix dcols(weights.cols(), dout.cols());
    dcols.noalias() = weights.transpose() * dout;
    grad = col2im(dcols, static_cast<std::size_t>(conv.in_channels), g);
    if (!all_finite(grad.data())) throw NumericError("non-finite gradient", conv.name);
  }
  return {og.value, std::move(grad), std::move(enc)};
}

std::string encoder_fingerprint(const EncoderConfig& cfg) { return ConvEncoder(cfg).fingerprint(); }

}  // namespace fastprotect
