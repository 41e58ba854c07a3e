#pragma once

// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The proxyrank Authors

#include <stdexcept>
#include <string>

namespace proxyrank {

/// Base class for all errors raised by the library. Maps to CLI exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid input data or configuration. Maps to CLI exit code 2.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

/// The training data carries no ranking signal (every score tied, every
/// correlation undefined, no preference pairs).
class DegenerateFitError : public ValidationError {
 public:
  explicit DegenerateFitError(const std::string& msg) : ValidationError(msg) {}
};

}  // namespace proxyrank
