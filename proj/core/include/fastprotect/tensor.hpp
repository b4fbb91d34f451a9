// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fastprotect {

/// Dense channel-major C×H×W tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0);
  Tensor(std::size_t channels, std::size_t height, std::size_t width, std::vector<double> values);

  std::size_t channels() const noexcept { return c_; }
  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[(c * h_ + y) * w_ + x];
  }
  double operator()(std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[(c * h_ + y) * w_ + x];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> channel(std::size_t c) noexcept {
    return std::span<double>(data_).subspan(c * h_ * w_, h_ * w_);
  }
  std::span<const double> channel(std::size_t c) const noexcept {
    return std::span<const double>(data_).subspan(c * h_ * w_, h_ * w_);
  }

  bool same_shape(const Tensor& other) const noexcept {
    return c_ == other.c_ && h_ == other.h_ && w_ == other.w_;
  }
  std::string shape_string() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t c_ = 0;
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);

double squared_norm(std::span<const double> v);
double squared_distance(std::span<const double> a, std::span<const double> b);
double max_abs(std::span<const double> v);
bool all_finite(std::span<const double> v);

/// Rounds every element to the nearest float32 value.
void round_to_float(std::span<double> v);
/// Largest float32 value that is <= x.
double float_floor(double x);

}  // namespace fastprotect
