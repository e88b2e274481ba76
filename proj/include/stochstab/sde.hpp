#pragma once

// Closed (control-free) SDE ready for integration. Feedback synthesis and
// policy wrappers both reduce a controlled system to this form.

#include <functional>
#include <string>

#include "stochstab/model.hpp"

namespace stochstab {

struct Sde {
  int dim_state = 0;
  int dim_noise = 0;
  std::function<Vector(const Vector&)> drift;
  std::function<Matrix(const Vector&)> dispersion;
  // applied control (or law components) recorded alongside the path
  std::function<Vector(const Vector&)> control_trace;
  std::string name;
};

}  // namespace stochstab
