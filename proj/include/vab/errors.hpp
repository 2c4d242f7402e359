#pragma once

#include <stdexcept>
#include <string>

namespace vab {

// Bad input the caller can fix: malformed config, corrupt file, missing
// upstream artifact. The CLI maps it (and std::invalid_argument) to exit 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vab
