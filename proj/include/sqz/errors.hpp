#pragma once
#include <stdexcept>
#include <string>

namespace sqz {

// Error taxonomy. The CLI maps these onto exit codes:
// config/domain -> 2, data -> 3, numeric -> 4.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A physical parameter is outside its valid range.
struct domain_error : error {
  using error::error;
};

// Pump at or beyond oscillation threshold where a sub-threshold formula is required.
struct above_threshold_error : domain_error {
  using domain_error::domain_error;
};

// Bad configuration file or option.
struct config_error : error {
  using error::error;
};

// Malformed, insufficient, or physically infeasible input data.
struct data_error : error {
  using error::error;
};

// Numerical failure: instability, non-convergence, degenerate systems.
struct numeric_error : error {
  using error::error;
};

}  // namespace sqz
