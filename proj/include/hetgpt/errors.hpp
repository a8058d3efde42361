#pragma once

#include <stdexcept>
#include <string>

namespace hetgpt {

/// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Structural problem in a graph, metapath, or input file.
struct ValidationError : Error {
  using Error::Error;
};

/// Shape mismatch between tensors.
struct DimensionError : Error {
  using Error::Error;
};

/// Non-finite value or other numeric failure.
struct NumericError : Error {
  using Error::Error;
};

/// Bad configuration value or infeasible request.
struct ConfigError : Error {
  using Error::Error;
};

/// Checkpoint parse failure or fingerprint mismatch.
struct CheckpointError : Error {
  using Error::Error;
};

}  // namespace hetgpt
