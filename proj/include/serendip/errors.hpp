#pragma once

#include <stdexcept>
#include <string>

namespace serendip {

// Error taxonomy mirrored by CLI exit codes.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct BackendError : std::runtime_error {
  explicit BackendError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when a persisted artifact refers to a different tree/corpus version.
struct StalenessError : DataError {
  explicit StalenessError(const std::string& msg) : DataError(msg) {}
};

}  // namespace serendip
