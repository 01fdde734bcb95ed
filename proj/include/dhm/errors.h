#pragma once

#include <stdexcept>
#include <string>

namespace dhm {

// Invalid input: bad parameters, malformed files, out-of-range requests.
class DomainError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

// Precondition of an operation not met by an otherwise valid value.
class ContractViolation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

// Iterative method failed to converge or produced non-finite values.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Flow energy increased repeatedly or diverged.
class InstabilityError : public NumericError {
public:
  using NumericError::NumericError;
};

class NotFoundError : public DomainError {
public:
  using DomainError::DomainError;
};

// Request exceeds a configured resource limit.
class LimitError : public DomainError {
public:
  using DomainError::DomainError;
};

} // namespace dhm
