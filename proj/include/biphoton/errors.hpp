#pragma once

#include <stdexcept>
#include <string>

namespace biphoton {

/// Malformed or unusable data (bad CSV, too few points, degenerate axis).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unparseable or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace biphoton
