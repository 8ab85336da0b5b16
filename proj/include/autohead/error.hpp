#pragma once

#include <stdexcept>
#include <string>

namespace autohead {

// Failure category; the CLI maps each to an exit code.
enum class ErrorKind {
  kUsage = 1,
  kData = 2,
  kTraining = 3,
  kSearch = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Tensor or matrix dimensions that do not agree.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::kTraining, "shape error: " + what) {}
};

/// Invalid hyperparameter or layer configuration.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kUsage, "config error: " + what) {}
};

/// Missing, unreadable or malformed input data (datasets, caches, model files).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::kData, "data error: " + what) {}
};

class TrainingError : public Error {
 public:
  explicit TrainingError(const std::string& what) : Error(ErrorKind::kTraining, "training error: " + what) {}
};

class SearchError : public Error {
 public:
  explicit SearchError(const std::string& what) : Error(ErrorKind::kSearch, "search error: " + what) {}
};

}  // namespace autohead
