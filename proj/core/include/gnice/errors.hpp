#pragma once

#include <stdexcept>
#include <string>

namespace gnice {

/// A computation produced a non-finite value, failed to converge, or diverged.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gnice
