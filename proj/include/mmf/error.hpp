#pragma once

#include <stdexcept>
#include <string>

namespace mmf {

/// Raised for contract violations: shape mismatches, degenerate inputs,
/// malformed checkpoints.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mmf
