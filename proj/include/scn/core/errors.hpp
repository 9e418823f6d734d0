#ifndef SCN_CORE_ERRORS_HPP
#define SCN_CORE_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace scn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered, or a numerical precondition (rank, symmetry) failed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// The subspace basis W is numerically rank deficient.
class DegenerateBasisError : public NumericError {
 public:
  using NumericError::NumericError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

}  // namespace scn

#endif  // SCN_CORE_ERRORS_HPP
