#pragma once
#include <stdexcept>
#include <string>

namespace photonstat {

/// Invalid configuration or parameters (CLI exit code 2).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed file on disk (CLI exit code 3).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Data violating stream invariants (CLI exit code 3).
struct IntegrityError : std::runtime_error {
  explicit IntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Estimator failure: singular system, non-convergence, degenerate input (CLI exit code 4).
struct EstimationError : std::runtime_error {
  explicit EstimationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace photonstat
