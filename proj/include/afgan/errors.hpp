#pragma once

#include <stdexcept>
#include <string>

namespace afgan {

// Dimension or configuration mismatch between inputs and parameters.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input values outside their domain (e.g. non-binary attribute bits).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Caller broke an operation's precondition (stage overflow, empty batch, ...).
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

// A requested plug-in or backend is not available in this build.
struct CapabilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised by the training loop when a loss becomes non-finite.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace afgan
