#pragma once

#include <stdexcept>
#include <string>

namespace patchmil {

/// Base for every diagnostic the library raises. Messages are one line and
/// name the offending input where there is one.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad shape, out-of-range value).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A file could not be read, written or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace patchmil
