#pragma once

#include <cmath>

#include "repair/errors.hpp"

namespace repair {

/// Exponential soft margin: alpha * (m^y - 1) / (m - 1).
inline double soft_margin(double y_star, double m, double alpha) {
  if (!(m > 1.0)) throw ParameterError("soft margin base m must exceed 1");
  if (!(y_star >= 0.0 && y_star <= 1.0)) throw ParameterError("soft label must lie in [0, 1]");
  return alpha * (std::pow(m, y_star) - 1.0) / (m - 1.0);
}

}  // namespace repair
