#pragma once

#include <stdexcept>
#include <string>

namespace url {

// Error taxonomy shared by every module. The CLI maps these onto process
// exit codes (usage errors are handled by the argument parser itself):
//   DataError    -> 2   malformed inputs, schema violations, missing files
//   NumericError -> 3   non-finite values, zero-norm pools, failed invariants
// ShapeError derives from NumericError: a shape mismatch is a programming or
// data-layout fault detected by the numeric layer, and it must abort the
// computation the same way a NaN would.

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

class ShapeError : public NumericError {
 public:
  explicit ShapeError(const std::string& msg) : NumericError(msg) {}
};

}  // namespace url
