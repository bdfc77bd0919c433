#pragma once

#include <functional>
#include <optional>
#include <stdexcept>

#include "autoscout/config_space.hpp"

namespace autoscout {

/// Ground-truth cost of a configuration (lower is better). Returns
/// kInfeasible for configurations that cannot run; throws OracleError when
/// the measurement itself failed.
using Oracle = std::function<double(const Configuration&)>;

/// Cheap cost estimate; nullopt when no estimate is available.
using Simulator = std::function<std::optional<double>(const Configuration&)>;

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace autoscout
