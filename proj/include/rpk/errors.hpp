#pragma once

#include <stdexcept>
#include <string>

namespace rpk {

// Error taxonomy used across the library. All derive from std::runtime_error
// so callers can catch coarsely or precisely.

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Carries the 1-based data-row index when the failure is row-scoped.
struct ValueError : std::runtime_error {
  explicit ValueError(const std::string& msg, long row = -1)
      : std::runtime_error(row >= 0 ? msg + " (row " + std::to_string(row) + ")" : msg),
        row(row) {}
  long row;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvariantError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateGeometry : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ResourceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IOError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RejectedSample : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rpk
