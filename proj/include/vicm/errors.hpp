#pragma once

#include <stdexcept>
#include <string>

namespace vicm {

// Base for every library error. Subtypes map onto CLI exit codes:
// DataError -> 2, everything else numeric/parameter -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParameterError : Error {
  using Error::Error;
};

struct DomainError : Error {
  using Error::Error;
};

struct ConstraintViolation : Error {
  using Error::Error;
};

struct DegenerateRangeError : Error {
  using Error::Error;
};

// Carries the model block whose design columns broke the factorization,
// -1 when no single block could be blamed.
struct SingularDesignError : Error {
  explicit SingularDesignError(const std::string& msg, int block_index = -1)
      : Error(msg), block(block_index) {}
  int block;
};

struct ConditioningError : Error {
  using Error::Error;
};

struct InsufficientDataError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

struct TuningError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

}  // namespace vicm
