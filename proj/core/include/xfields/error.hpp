// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace xfields {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A node produced NaN or Inf during forward evaluation.
class NonFiniteError : public Error {
 public:
  NonFiniteError(std::size_t node, const std::string& op)
      : Error("non-finite value produced by node " + std::to_string(node) +
              " (" + op + ")"),
        node_(node) {}
  std::size_t node() const { return node_; }

 private:
  std::size_t node_;
};

/// Finite differences would straddle a kink of a piecewise-smooth op.
class NonDifferentiablePointError : public Error {
 public:
  using Error::Error;
};

class GraphStateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Dataset / manifest errors.
class FileNotFoundError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class CoordinateLengthError : public SchemaError {
 public:
  using SchemaError::SchemaError;
};

class ImageIoError : public Error {
 public:
  using Error::Error;
};

// Model file errors.
class BadMagicError : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersionError : public Error {
 public:
  using Error::Error;
};

class TruncatedFileError : public Error {
 public:
  using Error::Error;
};

class DuplicateTensorError : public Error {
 public:
  using Error::Error;
};

class MissingTensorError : public Error {
 public:
  using Error::Error;
};

}  // namespace xfields
