#pragma once

#include <stdexcept>
#include <string>

namespace pg2 {

/// Bad flags, bad config values, violated preconditions on arguments.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Missing files, malformed annotations, incompatible checkpoints, shape mismatches.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or other numerical breakdown during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pg2
