#pragma once

#include <numbers>
#include <stdexcept>
#include <string>

namespace treedoa {

// Raised for invalid configuration or violated preconditions. The CLI maps it
// to exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a computation fails at runtime (diverged training, corrupt
// checkpoint, I/O). The CLI maps it to exit code 2.
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Every public interface speaks degrees; these are the only conversions.
constexpr double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

const char* library_version();

}  // namespace treedoa
