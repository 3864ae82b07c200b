#pragma once

#include <stdexcept>
#include <string>

namespace fieldex {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Operand shapes or ranks incompatible with an operation.
class ShapeError : public Error {
  using Error::Error;
};

// Malformed input data: BIO files, record files, configs, checkpoints.
class FormatError : public Error {
  using Error::Error;
};

// Filesystem-level failure.
class IoError : public Error {
  using Error::Error;
};

// A contract the library maintains internally was violated.
class InvariantError : public Error {
  using Error::Error;
};

}  // namespace fieldex
