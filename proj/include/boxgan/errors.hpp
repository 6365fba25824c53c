// Copyright 2026 The boxgan Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace boxgan {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (invalid box, bad argument).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Tensor or grid extents do not line up.
class ShapeError : public PreconditionError {
 public:
  using PreconditionError::PreconditionError;
};

/// Missing, unreadable or malformed data or configuration on disk.
class DataError : public Error {
 public:
  using Error::Error;
};

/// A loss or gradient became non-finite during training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Higher-order differentiation reached an operation whose backward pass is
/// not itself differentiable.
class NotTwiceDifferentiableError : public Error {
 public:
  using Error::Error;
};

}  // namespace boxgan
