#include "hj/newton.hpp"

#include <cmath>
#include <limits>

namespace hj {

NewtonResult newton_solve(const std::function<Vector(const Vector&)>& residual,
                          const std::function<Matrix(const Vector&)>& jacobian, Vector x0,
                          const NewtonOptions& options, const std::string& context) {
  Vector x = std::move(x0);
  Vector f = residual(x);
  double norm = f.lpNorm<Eigen::Infinity>();
  for (int it = 0; it <= options.max_iterations; ++it) {
    if (!std::isfinite(norm)) break;
    if (norm <= options.tolerance) return {x, it, norm};
    if (it == options.max_iterations) break;

    Matrix j = jacobian(x);
    Vector step = j.fullPivLu().solve(-f);
    if (!step.allFinite()) break;

    // Halve steps that leave the guarded domain or produce non-finite residuals.
    double scale = 1.0;
    Vector trial;
    Vector ftrial;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving) {
      trial = x + scale * step;
      try {
        ftrial = residual(trial);
        if (ftrial.allFinite()) {
          accepted = true;
          break;
        }
      } catch (const DomainViolation&) {
      }
      scale *= 0.5;
    }
    if (!accepted) break;

    const double step_norm = (trial - x).lpNorm<Eigen::Infinity>();
    x = std::move(trial);
    f = std::move(ftrial);
    norm = f.lpNorm<Eigen::Infinity>();
    const double stall = 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + x.lpNorm<Eigen::Infinity>());
    if (step_norm <= stall && norm <= std::sqrt(options.tolerance)) return {x, it + 1, norm};
  }
  throw NewtonDivergence(options.max_iterations, norm, context);
}

}  // namespace hj
