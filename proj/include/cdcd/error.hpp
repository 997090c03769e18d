#pragma once

#include <stdexcept>
#include <string>

namespace cdcd {

/// Raised for every contract violation in the library (bad shapes, out-of-range
/// steps, malformed files). The message names the operation that failed.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cdcd
