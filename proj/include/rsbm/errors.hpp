#pragma once

#include <stdexcept>
#include <string>

namespace rsbm {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Evaluation at (or numerically at) a singularity of a formula, e.g. s_t -> 1.
class PoleError : public DomainError {
 public:
  using DomainError::DomainError;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values during training or integration.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rsbm
