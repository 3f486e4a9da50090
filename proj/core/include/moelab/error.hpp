// Copyright 2026 The moe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace moelab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or configuration value. `field()` names the offending
/// key when one is known (e.g. "train.T1").
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg, std::string field = {})
      : Error(field.empty() ? msg : field + ": " + msg), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Linear-algebra degeneracy: vanishing residual, singular system.
class DegeneracyError : public Error {
 public:
  using Error::Error;
};

/// Vector or matrix dimensions that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Quadrature rule cannot resolve the requested expansion degree.
class QuadratureError : public Error {
 public:
  using Error::Error;
};

/// Operation called on a model in the wrong routing mode.
class ModeError : public Error {
 public:
  using Error::Error;
};

}  // namespace moelab
