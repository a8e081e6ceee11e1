#pragma once

#include <stdexcept>
#include <string>

namespace framesel {

// Operand shapes do not fit the operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Value outside the mathematical domain of an operation (tau <= 0, log of 0, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Caller broke a precondition that is not about shapes or numeric domains.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A function evaluated to NaN/Inf during gradient checking.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed on-disk data (FSEB payloads, manifests, snapshots).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace framesel
