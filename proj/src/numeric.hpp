#pragma once

#include <algorithm>
#include <cmath>

namespace mlenkf::detail {

// Ceiling that snaps values within 1e-9 (relative) of an integer to it, e.g.
// 256·8^{-4/3} evaluates to 16, not 17.
inline double tolerant_ceil(double x) {
  const double nearest = std::round(x);
  if (std::abs(x - nearest) <= 1e-9 * std::max(1.0, std::abs(x))) return nearest;
  return std::ceil(x);
}

}  // namespace mlenkf::detail
