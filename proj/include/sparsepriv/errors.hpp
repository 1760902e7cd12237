#pragma once

#include <stdexcept>
#include <string>

namespace sparsepriv {

/// Invalid configuration (bad hyperparameters, incompatible shapes at build time).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Tensor/layer shape mismatch detected while running.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// API misuse (e.g. backward without a preceding forward).
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

/// File I/O failure; message carries the path and, where known, the byte offset.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sparsepriv
