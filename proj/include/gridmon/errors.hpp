#pragma once

#include <stdexcept>
#include <string>

namespace gridmon {

// A documented size/rate/range precondition was violated by the caller.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Requested decomposition depth is not feasible for the given frame.
// Carries the deepest level that would have been accepted.
class DepthError : public std::invalid_argument {
 public:
  DepthError(const std::string& what, int max_feasible)
      : std::invalid_argument(what), max_feasible_level(max_feasible) {}

  int max_feasible_level;
};

// Tensor or layer wiring does not match the declared shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Batch statistics cannot be formed (e.g. normalisation over a single sample).
class StatisticsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// File content is malformed, truncated, or of an unsupported version.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An operation was called out of order (e.g. backward before forward).
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A stage function failed mid-run; the pipeline was halted and drained.
class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gridmon
