#pragma once

#include <stdexcept>
#include <string>

namespace dan {

/// Invalid or inconsistent configuration (dimensions, ranges, missing keys).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or matrix of the wrong length for the model it is fed to.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite or out-of-domain numeric input.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training diverged or was handed unusable data.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed, truncated or mismatched weight file.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inverse kinematics target outside the arm's workspace.
class UnreachableError : public std::runtime_error {
 public:
  UnreachableError(const std::string& what, double distance)
      : std::runtime_error(what), closest_distance(distance) {}
  double closest_distance;
};

}  // namespace dan
