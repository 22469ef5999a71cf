#pragma once

#include <stdexcept>
#include <string>

namespace foresight {

// Everything thrown by the library derives from Error so the CLI boundary can
// catch a single type.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand dimensions disagree; the message names both shapes.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid configuration value or file.
struct ConfigError : Error {
  using Error::Error;
};

// API precondition violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

// Vector norm below the safe normalization floor. A zero feature vector
// signals a data bug, so this is a hard error rather than a clamp.
struct DegenerateVectorError : Error {
  using Error::Error;
};

// Class label outside the valid range.
struct LabelError : Error {
  using Error::Error;
};

// Metric preconditions violated (e.g. k larger than the class count).
struct MetricError : Error {
  using Error::Error;
};

// Optimizer refused to apply a step (non-finite gradients, diverged loss).
struct OptimizerError : Error {
  using Error::Error;
};

// Dataset loading / validation failure; names the offending file and line.
struct DataError : Error {
  using Error::Error;
};

// Filesystem failure.
struct IoError : Error {
  using Error::Error;
};

// Evaluation over an unusable split.
struct EvalError : Error {
  using Error::Error;
};

}  // namespace foresight
