#pragma once

#include <stdexcept>
#include <string>

namespace ainv {

// Shape or layout disagreement between tensors.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A scalar argument outside its admissible range (stride <= 0, bad label, ...).
struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Invalid configuration object (EncoderConfig, SynthConfig, TrainConfig).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Operation called in a state it cannot serve (e.g. eval-mode batchnorm
// before any training batch initialized the running statistics).
struct StateError : std::logic_error {
  using std::logic_error::logic_error;
};

// Malformed file content; the message names the failing byte offset.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A label outside the domain the model was trained on.
struct LabelDomainError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ainv
