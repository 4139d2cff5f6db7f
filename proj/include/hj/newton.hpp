#pragma once

#include <functional>
#include <string>

#include "hj/smooth_map.hpp"

namespace hj {

/// Uniform policy for every implicit solve in the toolkit.
struct NewtonOptions {
  double tolerance = 1e-12;
  int max_iterations = 50;
};

struct NewtonResult {
  Vector x;
  int iterations = 0;
  double residual = 0.0;
};

/// Solve F(x) = 0 by Newton's method from x0. Steps that land outside a
/// guarded domain are halved until they don't. Converges when
/// ||F||_inf <= tolerance, or when the step has stalled at rounding level
/// with ||F||_inf <= sqrt(tolerance). Throws NewtonDivergence otherwise.
NewtonResult newton_solve(const std::function<Vector(const Vector&)>& residual,
                          const std::function<Matrix(const Vector&)>& jacobian, Vector x0,
                          const NewtonOptions& options = {}, const std::string& context = {});

}  // namespace hj
