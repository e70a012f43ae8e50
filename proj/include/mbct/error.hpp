#pragma once

#include <stdexcept>
#include <string>

namespace mbct {

/// Raised for every contract violation the library detects (bad input,
/// degenerate binning, schema mismatch). The message is user-facing.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mbct
