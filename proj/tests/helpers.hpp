#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "codedevent/config.hpp"

namespace testutil {

inline codedevent::OpticalConfig small_config(int grid = 64) {
  codedevent::OpticalConfig c;
  c.grid = grid;
  return c;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace testutil
