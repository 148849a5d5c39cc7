// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace har {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes, indices or labels that an operation cannot accept.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A frame is shorter than the kernel/pool stack applied to it.
class FrameTooShort : public Error {
 public:
  using Error::Error;
};

/// A hyperparameter or protocol setting outside its admissible range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Missing, unreadable or malformed dataset files and record stores.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A metric evaluated on an empty confusion matrix.
class MetricUndefined : public Error {
 public:
  using Error::Error;
};

}  // namespace har
