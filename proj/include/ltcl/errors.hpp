#pragma once

#include <stdexcept>
#include <string>

namespace ltcl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible vector or matrix dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A vector whose Euclidean norm is too small to normalize.
class DegenerateNormError : public Error {
 public:
  using Error::Error;
};

/// An argument outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared during forward or backward evaluation.
class NumericOverflowError : public Error {
 public:
  using Error::Error;
};

/// The sample pool cannot satisfy a requested quota.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// A caller broke an operation's precondition.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace ltcl
