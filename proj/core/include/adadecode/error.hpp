// Copyright 2026 The AdaDecode Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace adadecode {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible (matmul, solves, container tensors).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A precondition on an argument value was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced, iteration failed to converge, or a matrix is singular.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A layer was asked to process positions that are not contiguous with its
/// cached key/value prefix.
class CacheIncompleteError : public Error {
 public:
  using Error::Error;
};

/// Loss became non-finite during training.
class TrainingDivergedError : public Error {
 public:
  using Error::Error;
};

/// Pending-token capacity would be exceeded.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Binary container or text file failed to parse.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace adadecode
