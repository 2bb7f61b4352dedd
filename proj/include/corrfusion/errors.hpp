#pragma once

#include <stdexcept>
#include <string>

namespace corrfusion {

// Operand shapes disagree. The message carries both shapes.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Train-mode statistics need at least two rows.
struct DegenerateBatchError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// Backward called with a cache that does not belong to the current forward.
struct CacheError : std::logic_error {
  using std::logic_error::logic_error;
};

// Operation not valid in the layer's current mode (e.g. backward through Infer BN).
struct ModeError : std::logic_error {
  using std::logic_error::logic_error;
};

// Invalid user configuration. The CLI maps this to a usage error.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Missing files, truncated payloads, manifests that disagree with data.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A loss term turned NaN/Inf during training.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace corrfusion
