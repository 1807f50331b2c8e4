#pragma once

#include <stdexcept>
#include <string>

namespace umood {

// Error taxonomy shared across the library. The CLI maps these onto exit
// codes: ArgumentError -> 2, FormatError -> 3, NumericError/TrainingError -> 4.

// Caller passed an invalid value (bad shape, empty batch, out-of-range label).
struct ArgumentError : std::invalid_argument {
  explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

// A file on disk does not match the expected layout (bad magic, truncation,
// ragged CSV row, checksum mismatch).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// A numeric procedure failed (singular covariance, non-finite evaluation,
// infeasible rejection sampling).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// An optimization loop diverged; message names the epoch.
struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace umood
