#pragma once

#include <stdexcept>
#include <string>

namespace protosphere {

// Violated precondition on an argument (shape, range, sign).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation produced a zero-length vector where a direction was needed.
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed artifact file. The message names the violated rule and, where
// applicable, the offending line.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace protosphere
