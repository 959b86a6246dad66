#pragma once

#include <stdexcept>
#include <string>

namespace mlenkf {

/// Malformed argument: wrong dimensions, non-finite entries, out-of-range
/// parameters.
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

/// Cholesky hit a non-positive pivot.
class NotSpd : public std::runtime_error {
 public:
  explicit NotSpd(const std::string& what) : std::runtime_error(what) {}
};

/// An integrator step produced a non-finite state.
class Overflow : public std::runtime_error {
 public:
  explicit Overflow(const std::string& what) : std::runtime_error(what) {}
};

/// Iterative routine exhausted its iteration cap.
class NoConvergence : public std::runtime_error {
 public:
  explicit NoConvergence(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mlenkf
