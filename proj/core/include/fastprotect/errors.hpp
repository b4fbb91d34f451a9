// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace fastprotect {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Image bytes could not be decoded.
class DecodeError : public Error {
 public:
  using Error::Error;
};

/// Unsupported or malformed file layout (bad magic, version, channel count).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes disagree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem read/write failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Bundle payload failed checksum or was truncated.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// A model bundle was produced by a different encoder than the runtime one.
class CompatibilityError : public Error {
 public:
  using Error::Error;
};

/// Input image violates a precondition (e.g. too small).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A loss or gradient became non-finite. `where` names the layer or the
/// iteration at which it was detected.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::string where)
      : Error(what + " (at " + where + ")"), where_(std::move(where)) {}

  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

}  // namespace fastprotect
