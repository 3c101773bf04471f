#pragma once

#include <stdexcept>
#include <string>

namespace scct {

// Shape disagreement between operands.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Caller violated a documented precondition.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// NaN / Inf where a finite value is required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed file, config or manifest.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace scct
