#pragma once

#include <stdexcept>
#include <string>

namespace repair {

/// Invalid argument or configuration value.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Malformed or truncated binary container.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Input whose projection has zero norm.
struct DegenerateInputError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Batch too small to supply in-batch negatives.
struct InsufficientNegativesError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct EmptyBankError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// EM cannot be run: every loss value is identical.
struct DegenerateFitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A rank vector has zero variance, so the correlation is undefined.
struct UndefinedCorrelation : std::domain_error {
  using std::domain_error::domain_error;
};

}  // namespace repair
