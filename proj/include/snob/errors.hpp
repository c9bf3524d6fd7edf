#pragma once

#include <stdexcept>
#include <string>

namespace snob {

// Error taxonomy mapped to CLI exit codes: config 2, data 3, numerical 4.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
  static constexpr int exit_code = 2;
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
  static constexpr int exit_code = 3;
};

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
  static constexpr int exit_code = 4;
};

}  // namespace snob
