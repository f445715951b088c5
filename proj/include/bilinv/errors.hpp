#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bilinv {

/// Mismatch between an expected and an actual extent, with both sizes attached.
class DimensionError : public std::invalid_argument {
 public:
  DimensionError(const std::string& what_arg, std::ptrdiff_t expected, std::ptrdiff_t actual)
      : std::invalid_argument(what_arg + " (expected " + std::to_string(expected) +
                              ", got " + std::to_string(actual) + ")"),
        expected_(expected),
        actual_(actual) {}

  std::ptrdiff_t expected() const noexcept { return expected_; }
  std::ptrdiff_t actual() const noexcept { return actual_; }

 private:
  std::ptrdiff_t expected_;
  std::ptrdiff_t actual_;
};

/// A matrix factorization broke down; `pivot` names the offending pivot index
/// (-1 when the failure is not tied to a single pivot).
class FactorizationError : public std::runtime_error {
 public:
  FactorizationError(const std::string& what_arg, std::ptrdiff_t pivot = -1)
      : std::runtime_error(pivot >= 0 ? what_arg + " (pivot " + std::to_string(pivot) + ")"
                                      : what_arg),
        pivot_(pivot) {}

  std::ptrdiff_t pivot() const noexcept { return pivot_; }

 private:
  std::ptrdiff_t pivot_;
};

/// An iteration failed to converge; carries the best value reached so far
/// (for tensor_norm this is a valid lower bound on the norm).
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what_arg, double best)
      : std::runtime_error(what_arg + " (best value reached: " + std::to_string(best) + ")"),
        best_(best) {}

  double best_value() const noexcept { return best_; }

 private:
  double best_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void require_dim(std::ptrdiff_t expected, std::ptrdiff_t actual, const std::string& what) {
  if (expected != actual) throw DimensionError(what, expected, actual);
}

}  // namespace bilinv
