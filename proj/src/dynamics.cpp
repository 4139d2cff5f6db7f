#include "hj/dynamics.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "hj/newton.hpp"

namespace hj {

VectorFieldSection::VectorFieldSection(SmoothMap map, bool canonical)
    : SmoothMap(std::move(map)), canonical_(canonical) {
  if (in_dim() != out_dim()) throw DimensionMismatch("vector field must map a chart to itself");
}

VectorFieldSection VectorFieldSection::from_fields(std::vector<ScalarField> components) {
  return VectorFieldSection(SmoothMap::from_fields(std::move(components)));
}

VectorFieldSection VectorFieldSection::zero(Eigen::Index dim, bool canonical) {
  return VectorFieldSection(SmoothMap(
                                dim, dim, [dim](const Vector&) { return Vector::Zero(dim); },
                                [dim](const Vector&) { return Matrix::Zero(dim, dim); }),
                            canonical);
}

double FlowResult::total_error_estimate() const {
  double s = 0.0;
  for (double e : step_errors) s += e;
  return s;
}

int step_count(double t_end, double dt) {
  if (!(dt > 0.0)) throw Error("time step must be positive");
  if (!(t_end >= 0.0)) throw Error("final time must be non-negative");
  return static_cast<int>(std::ceil(t_end / dt - 1e-9));
}

namespace {

using Stepper = std::function<Vector(const Vector&, double)>;

FlowResult run_fixed_step(const Stepper& step, const Vector& x0, double t_end, double dt, const FlowOptions& options,
                          double richardson) {
  const int n = step_count(t_end, dt);
  const double h = n > 0 ? t_end / n : 0.0;
  const int stride = std::max(options.record_stride, 1);
  FlowResult out;
  out.times.push_back(0.0);
  out.states.push_back(x0);
  Vector x = x0;
  double pending_error = 0.0;
  double t_last = 0.0;
  for (int k = 0; k < n; ++k) {
    const double t = k * h;
    Vector next;
    try {
      next = step(x, h);
      if (options.estimate_errors) {
        Vector half = step(step(x, 0.5 * h), 0.5 * h);
        pending_error += (next - half).lpNorm<Eigen::Infinity>() / richardson;
      }
    } catch (DomainViolation& e) {
      e.time = t;
      e.has_time = true;
      if (!options.truncate_on_failure) throw;
      out.truncated = true;
      out.stop_reason = std::string(e.what()) + " at t = " + std::to_string(t);
      break;
    } catch (const NewtonDivergence& e) {
      if (!options.truncate_on_failure) throw;
      out.truncated = true;
      out.stop_reason = std::string(e.what()) + " at t = " + std::to_string(t);
      break;
    }
    if (!next.allFinite()) {
      std::ostringstream os;
      os << "non-finite state at t = " << t;
      if (!options.truncate_on_failure) throw Error(os.str());
      out.truncated = true;
      out.stop_reason = os.str();
      break;
    }
    x = std::move(next);
    t_last = k + 1 == n ? t_end : (k + 1) * h;
    if ((k + 1) % stride == 0 || k + 1 == n) {
      out.times.push_back(k + 1 == n ? t_end : (k + 1) * h);
      out.states.push_back(x);
      if (options.estimate_errors) out.step_errors.push_back(pending_error);
      pending_error = 0.0;
    }
  }
  if (out.truncated && out.times.back() != t_last) {
    out.times.push_back(t_last);
    out.states.push_back(x);
    if (options.estimate_errors) out.step_errors.push_back(pending_error);
  }
  return out;
}

Vector rk4_step(const std::function<Vector(const Vector&)>& f, const Vector& x, double h) {
  Vector k1 = f(x);
  Vector k2 = f(x + 0.5 * h * k1);
  Vector k3 = f(x + 0.5 * h * k2);
  Vector k4 = f(x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

FlowResult integrate_rk4(const std::function<Vector(const Vector&)>& rhs, const Vector& x0, double t_end, double dt,
                         const FlowOptions& options) {
  return run_fixed_step([&](const Vector& x, double h) { return rk4_step(rhs, x, h); }, x0, t_end, dt, options,
                        15.0);
}

FlowResult flow_rk4(const VectorFieldSection& z, const Vector& x0, double t_end, double dt,
                    const FlowOptions& options) {
  if (x0.size() != z.dim()) throw DimensionMismatch("initial state does not match the field dimension");
  return integrate_rk4([&](const Vector& x) { return z(x); }, x0, t_end, dt, options);
}

FlowResult flow_midpoint(const VectorFieldSection& z, const Vector& x0, double t_end, double dt,
                         const FlowOptions& options) {
  if (!z.canonical()) throw Error("implicit midpoint integration requires a canonical (Hamiltonian) field");
  if (!z.has_jacobian()) throw Error("implicit midpoint integration requires the field Jacobian");
  if (x0.size() != z.dim()) throw DimensionMismatch("initial state does not match the field dimension");
  const Eigen::Index d = z.dim();
  int step_index = 0;
  auto step = [&](const Vector& x, double h) -> Vector {
    ++step_index;
    auto residual = [&](const Vector& y) -> Vector { return y - x - h * z(0.5 * (x + y)); };
    auto jacobian = [&](const Vector& y) -> Matrix {
      return Matrix::Identity(d, d) - 0.5 * h * z.jacobian(0.5 * (x + y));
    };
    Vector guess = x + h * z(x);
    return newton_solve(residual, jacobian, guess, {}, "implicit midpoint step " + std::to_string(step_index)).x;
  };
  return run_fixed_step(step, x0, t_end, dt, options, 3.0);
}

ResidualReport slicing_residual(const ChartMap& alpha, const VectorFieldSection& x, const VectorFieldSection& z,
                                const std::vector<Vector>& samples, double tolerance) {
  if (alpha.in_dim() != x.dim() || alpha.out_dim() != z.dim())
    throw DimensionMismatch("slicing: alpha must map the domain of X into the domain of Z");
  ResidualReport report;
  report.op = "slicing_residual";
  report.tolerance = tolerance;
  for (const Vector& s : samples) {
    try {
      Vector r = alpha.jacobian(s) * x(s) - z(alpha(s));
      report.add({s, r, r.lpNorm<Eigen::Infinity>()});
    } catch (const DomainViolation& e) {
      report.add_skip(s, e.what());
    }
  }
  return report;
}

ParamFamily::ParamFamily(std::vector<std::string> base_vars, std::vector<std::string> param_names,
                         std::vector<ScalarField> components)
    : base_vars_(std::move(base_vars)), param_names_(std::move(param_names)) {
  std::vector<std::string> all = base_vars_;
  all.insert(all.end(), param_names_.begin(), param_names_.end());
  for (auto& c : components) components_.push_back(c.over(all));
  joint_ = SmoothMap::from_fields(components_);
}

ChartMap ParamFamily::slice(const Vector& lambda) const {
  if (lambda.size() != n_params()) throw DimensionMismatch("parameter vector has the wrong length");
  const Eigen::Index nb = base_dim();
  SmoothMap joint = joint_;
  return ChartMap(
      nb, out_dim(),
      [joint, lambda, nb](const Vector& q) {
        Vector full(nb + lambda.size());
        full << q, lambda;
        return joint(full);
      },
      [joint, lambda, nb](const Vector& q) -> Matrix {
        Vector full(nb + lambda.size());
        full << q, lambda;
        return joint.jacobian(full).leftCols(nb);
      });
}

Status CompleteSlicingReport::status() const {
  if (!singular_nodes.empty()) return Status::Fail;
  return residual.status();
}

nlohmann::ordered_json CompleteSlicingReport::to_json() const {
  nlohmann::ordered_json j;
  j["op"] = "complete_slicing_check";
  j["min_abs_det"] = min_abs_det;
  j["n_singular"] = singular_nodes.size();
  j["singular_nodes"] = singular_nodes;
  j["residual"] = residual.to_json();
  j["notes"] = notes;
  j["status"] = to_string(status());
  return j;
}

CompleteSlicingReport complete_slicing_check(const ParamFamily& family, const VectorFieldSection& z,
                                             const std::vector<Vector>& nodes, double tolerance,
                                             const ParamFamily* x_family) {
  const Eigen::Index nb = family.base_dim();
  const Eigen::Index np = family.n_params();
  if (nb + np != z.dim() || family.out_dim() != z.dim())
    throw DimensionMismatch("complete slicing needs base_dim + n_params = dim P");
  CompleteSlicingReport out;
  out.residual.op = "slicing_residual";
  out.residual.tolerance = tolerance;
  out.min_abs_det = std::numeric_limits<double>::infinity();
  out.notes.push_back(
      "surjectivity of the joint map is not checked; only Jacobian nonsingularity on the grid is verified");

  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const Vector& node = nodes[k];
    if (node.size() != nb + np) throw DimensionMismatch("grid node must list base coordinates then parameters");
    const Vector q = node.head(nb);
    const Vector lambda = node.tail(np);
    try {
      const double det = std::abs(family.joint().jacobian(node).determinant());
      out.min_abs_det = std::min(out.min_abs_det, det);
      if (det < kSingularDeterminant) {
        if (out.singular_nodes.empty()) out.notes.push_back(SingularFamily(k, det).what());
        out.singular_nodes.push_back(k);
      }
      ChartMap alpha = family.slice(lambda);
      Vector xq;
      if (x_family) {
        xq = x_family->slice(lambda)(q);
      } else {
        xq = z(alpha(q)).head(nb);
      }
      Vector r = alpha.jacobian(q) * xq - z(alpha(q));
      out.residual.add({node, r, r.lpNorm<Eigen::Infinity>()});
    } catch (const DomainViolation& e) {
      out.residual.add_skip(node, e.what());
    }
  }
  if (nodes.empty()) out.min_abs_det = 0.0;
  return out;
}

}  // namespace hj
