#pragma once

#include <stdexcept>
#include <string>

namespace flexgrid {

/// Malformed input file (JSON syntax, missing field, wrong type).
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Structurally valid input that violates a model invariant.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Power flow failed to converge or hit a singular Jacobian.
struct ConvergenceError : std::runtime_error {
  explicit ConvergenceError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical breakdown inside a solver (bad pivot, degenerate geometry).
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace flexgrid
