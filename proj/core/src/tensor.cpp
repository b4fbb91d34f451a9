// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include "fastprotect/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fastprotect/errors.hpp"

namespace fastprotect {

Tensor::Tensor(std::size_t channels, std::size_t height, std::size_t width, double fill)
    : c_(channels), h_(height), w_(width), data_(channels * height * width, fill) {}

Tensor::Tensor(std::size_t channels, std::size_t height, std::size_t width,
               std::vector<double> values)
    : c_(channels), h_(height), w_(width), data_(std::move(values)) {
  if (data_.size() != c_ * h_ * w_) {
    throw ShapeError("tensor value count " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string());
  }
}

std::string Tensor::shape_string() const {
  return std::to_string(c_) + "x" + std::to_string(h_) + "x" + std::to_string(w_);
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!same_shape(other)) {
    throw ShapeError("cannot add " + other.shape_string() + " to " + shape_string());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  if (!same_shape(other)) {
    throw ShapeError("cannot subtract " + other.shape_string() + " from " + shape_string());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }

double squared_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("squared_distance: size " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void round_to_float(std::span<double> v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

double float_floor(double x) {
  auto f = static_cast<float>(x);
  if (static_cast<double>(f) > x) f = std::nextafter(f, -std::numeric_limits<float>::infinity());
  return static_cast<double>(f);
}

}  // namespace fastprotect
