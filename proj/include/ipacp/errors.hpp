#pragma once

#include <stdexcept>
#include <string>

namespace ipacp {

// Error families that map onto CLI exit codes. Precondition violations on
// in-process calls use std::invalid_argument directly.

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ipacp
