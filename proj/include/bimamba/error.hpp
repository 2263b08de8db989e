// Copyright 2026 The BiMamba Authors. Apache 2.0 License.

#pragma once

#include <stdexcept>
#include <string>

namespace bimamba {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or extent mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Value outside the mathematical domain of an operation (non-positive delta, etc).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed autodiff graph: foreign variables, missing nodes, non-scalar loss.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// A function evaluation produced a non-finite value.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace bimamba
