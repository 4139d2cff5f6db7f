#include "hj/hamiltonian.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "hj/newton.hpp"

namespace hj {

std::vector<std::string> configuration_vars(int n, const std::string& prefix) {
  std::vector<std::string> v;
  for (int i = 1; i <= n; ++i) v.push_back(prefix + std::to_string(i));
  return v;
}

std::vector<std::string> phase_space_vars(int n) {
  auto v = configuration_vars(n, "q");
  auto p = configuration_vars(n, "p");
  v.insert(v.end(), p.begin(), p.end());
  return v;
}

HamiltonianSystem::HamiltonianSystem(int n, SmoothFunction hamiltonian) : n_(n), h_(std::move(hamiltonian)) {
  if (n < 1) throw DimensionMismatch("a Hamiltonian system needs n >= 1");
  if (h_.arity() != 2 * n) throw DimensionMismatch("H must depend on exactly 2n phase-space coordinates");
}

HamiltonianSystem HamiltonianSystem::parse(int n, const std::string& text) {
  return HamiltonianSystem(n, ScalarField::compile(text, phase_space_vars(n)));
}

OneFormSection::OneFormSection(SmoothMap map) : SmoothMap(std::move(map)) {
  if (in_dim() != out_dim()) throw DimensionMismatch("a 1-form on Q has n components over n coordinates");
}

OneFormSection OneFormSection::from_fields(std::vector<ScalarField> components) {
  return OneFormSection(SmoothMap::from_fields(std::move(components)));
}

OneFormSection OneFormSection::parse(int n, const std::vector<std::string>& texts) {
  std::vector<ScalarField> comps;
  for (const auto& t : texts) comps.push_back(ScalarField::compile(t, configuration_vars(n)));
  if (static_cast<int>(comps.size()) != n) throw DimensionMismatch("alpha needs n components");
  return from_fields(std::move(comps));
}

GeneratingScalar::GeneratingScalar(ScalarField s) : s_(std::move(s)) {}

OneFormSection GeneratingScalar::differential() const {
  ScalarField s = s_;
  const Eigen::Index n = s.arity();
  return OneFormSection(SmoothMap(
      n, n, [s](const Vector& q) { return s.gradient(q); }, [s](const Vector& q) { return s.hessian(q); }));
}

namespace {

Vector phase_point(const Vector& q, const Vector& p) {
  Vector x(q.size() + p.size());
  x << q, p;
  return x;
}

}  // namespace

VectorFieldSection hamiltonian_vector_field(const HamiltonianSystem& sys) {
  const SmoothFunction h = sys.hamiltonian();
  const Eigen::Index n = sys.n();
  const Matrix omega = canonical_symplectic_matrix(n);
  SmoothMap::JacobianFn jac;
  if (h.has_hessian()) jac = [h, omega](const Vector& x) -> Matrix { return omega * h.hessian(x); };
  return VectorFieldSection(
      SmoothMap(
          2 * n, 2 * n, [h, omega](const Vector& x) -> Vector { return omega * h.gradient(x); }, std::move(jac)),
      true);
}

VectorFieldSection associated_vector_field(const HamiltonianSystem& sys, const OneFormSection& alpha) {
  if (alpha.n() != sys.n()) throw DimensionMismatch("alpha and H have different numbers of degrees of freedom");
  const SmoothFunction h = sys.hamiltonian();
  const OneFormSection a = alpha;
  const Eigen::Index n = sys.n();
  SmoothMap::JacobianFn jac;
  if (h.has_hessian() && a.has_jacobian()) {
    jac = [h, a, n](const Vector& q) -> Matrix {
      Matrix hess = h.hessian(phase_point(q, a(q)));
      // d/dq [H_p(q, alpha(q))] = H_pq + H_pp J_alpha
      return hess.bottomLeftCorner(n, n) + hess.bottomRightCorner(n, n) * a.jacobian(q);
    };
  }
  return VectorFieldSection(SmoothMap(
      n, n, [h, a, n](const Vector& q) -> Vector { return h.gradient(phase_point(q, a(q))).tail(n); },
      std::move(jac)));
}

double pulled_back_hamiltonian(const HamiltonianSystem& sys, const OneFormSection& alpha, const Vector& q) {
  return sys.hamiltonian()(phase_point(q, alpha(q)));
}

Vector pulled_back_hamiltonian_gradient(const HamiltonianSystem& sys, const OneFormSection& alpha, const Vector& q) {
  const Eigen::Index n = sys.n();
  Vector g = sys.hamiltonian().gradient(phase_point(q, alpha(q)));
  return g.head(n) + alpha.jacobian(q).transpose() * g.tail(n);
}

Matrix pullback_symplectic_form(const OneFormSection& alpha, const Vector& q) {
  Matrix j = alpha.jacobian(q);
  return j - j.transpose();
}

ResidualReport generalized_hj_residual(const HamiltonianSystem& sys, const OneFormSection& alpha,
                                       const std::vector<Vector>& samples, double tolerance,
                                       const VectorFieldSection* x) {
  const VectorFieldSection assoc = x ? *x : associated_vector_field(sys, alpha);
  ResidualReport report;
  report.op = "generalized_hj_residual";
  report.tolerance = tolerance;
  for (const Vector& q : samples) {
    try {
      Matrix j = alpha.jacobian(q);
      // i(X) d(alpha) has components sum_i X^i (d_i alpha_j - d_j alpha_i).
      Vector contraction = (j - j.transpose()) * assoc(q);
      Vector r = contraction + pulled_back_hamiltonian_gradient(sys, alpha, q);
      report.add({q, r, r.lpNorm<Eigen::Infinity>()});
    } catch (const DomainViolation& e) {
      report.add_skip(q, e.what());
    }
  }
  return report;
}

nlohmann::ordered_json StandardHJReport::to_json() const {
  nlohmann::ordered_json j;
  j["op"] = "standard_hj_residual";
  j["closedness_defect"] = closedness.to_json();
  j["dH_defect"] = dh.to_json();
  j["status"] = to_string(status());
  return j;
}

StandardHJReport standard_hj_residual(const HamiltonianSystem& sys, const OneFormSection& alpha,
                                      const std::vector<Vector>& samples, double tolerance) {
  StandardHJReport out;
  out.closedness.op = "closedness_defect";
  out.dh.op = "dH_defect";
  out.closedness.tolerance = out.dh.tolerance = tolerance;
  for (const Vector& q : samples) {
    try {
      Matrix w = pullback_symplectic_form(alpha, q);
      double c = max_abs(w);
      Vector g = pulled_back_hamiltonian_gradient(sys, alpha, q);
      out.closedness.add({q, Vector::Constant(1, c), c});
      out.dh.add({q, g, g.norm()});
    } catch (const DomainViolation& e) {
      out.closedness.add_skip(q, e.what());
      out.dh.add_skip(q, e.what());
    }
  }
  return out;
}

namespace {

FlowResult hamiltonian_flow(const HamiltonianSystem& sys, const Vector& x0, double t_end,
                            const TrajectoryOptions& options, bool truncate) {
  VectorFieldSection z = hamiltonian_vector_field(sys);
  FlowOptions fo;
  fo.estimate_errors = false;
  fo.truncate_on_failure = truncate;
  return options.midpoint ? flow_midpoint(z, x0, t_end, options.dt, fo) : flow_rk4(z, x0, t_end, options.dt, fo);
}

}  // namespace

ResidualReport invariance_defect(const HamiltonianSystem& sys, const OneFormSection& alpha,
                                 const std::vector<Vector>& starts, double t_end, double tolerance,
                                 const TrajectoryOptions& options) {
  const Eigen::Index n = sys.n();
  ResidualReport report;
  report.op = "invariance_defect";
  report.tolerance = tolerance;
  for (const Vector& q0 : starts) {
    try {
      FlowResult flow = hamiltonian_flow(sys, phase_point(q0, alpha(q0)), t_end, options, false);
      double worst = 0.0;
      Vector worst_gap = Vector::Zero(n);
      for (const Vector& state : flow.states) {
        Vector gap = state.tail(n) - alpha(state.head(n));
        double g = gap.lpNorm<Eigen::Infinity>();
        if (g > worst) {
          worst = g;
          worst_gap = gap;
        }
      }
      report.add({q0, worst_gap, worst});
    } catch (const Error& e) {
      report.add_skip(q0, e.what());
    }
  }
  return report;
}

nlohmann::ordered_json ReconstructResult::to_json() const {
  nlohmann::ordered_json j;
  j["op"] = "reconstruct";
  j["max_gap"] = max_gap;
  j["partial"] = partial;
  j["t_reached"] = t_reached;
  if (!note.empty()) j["note"] = note;
  j["n_samples"] = base_curve.times.size();
  return j;
}

ReconstructResult reconstruct(const HamiltonianSystem& sys, const OneFormSection& alpha, const Vector& q0,
                              double t_end, const TrajectoryOptions& options) {
  const Eigen::Index n = sys.n();
  ReconstructResult out;
  VectorFieldSection x = associated_vector_field(sys, alpha);
  FlowOptions fo;
  fo.estimate_errors = false;
  fo.truncate_on_failure = true;
  out.base_curve = flow_rk4(x, q0, t_end, options.dt, fo);
  out.direct_curve = hamiltonian_flow(sys, phase_point(q0, alpha(q0)), t_end, options, true);

  const std::size_t common = std::min(out.base_curve.states.size(), out.direct_curve.states.size());
  for (std::size_t k = 0; k < common; ++k) {
    const Vector& q = out.base_curve.states[k];
    Vector lifted;
    try {
      lifted = phase_point(q, alpha(q));
    } catch (const DomainViolation& e) {
      out.partial = true;
      out.note = e.what();
      break;
    }
    out.max_gap = std::max(out.max_gap, (lifted - out.direct_curve.states[k]).lpNorm<Eigen::Infinity>());
    out.lifted_curve.push_back(std::move(lifted));
    out.t_reached = out.base_curve.times[k];
  }
  if (out.base_curve.truncated || out.direct_curve.truncated) {
    out.partial = true;
    if (out.note.empty())
      out.note = out.base_curve.truncated ? out.base_curve.stop_reason : out.direct_curve.stop_reason;
  }
  (void)n;
  return out;
}

Vector invert_family(const ParamFamily& family, const Vector& q, const Vector& p, const Vector& guess) {
  const Eigen::Index nb = family.base_dim();
  const Eigen::Index np = family.n_params();
  auto full = [&](const Vector& lambda) {
    Vector x(nb + np);
    x << q, lambda;
    return x;
  };
  auto residual = [&](const Vector& lambda) -> Vector { return family.joint()(full(lambda)) - p; };
  auto jacobian = [&](const Vector& lambda) -> Matrix { return family.joint().jacobian(full(lambda)).rightCols(np); };
  return newton_solve(residual, jacobian, guess, {}, "constant-of-motion inversion").x;
}

Status CompleteSolutionReport::status() const {
  if (!singular_nodes.empty()) return Status::Fail;
  return combine({closedness.status(), dh.status(), constants_drift.status()});
}

nlohmann::ordered_json CompleteSolutionReport::to_json() const {
  nlohmann::ordered_json j;
  j["op"] = "complete_solution_check";
  j["closedness_defect"] = closedness.to_json();
  j["dH_defect"] = dh.to_json();
  j["min_abs_det"] = min_abs_det;
  j["n_singular"] = singular_nodes.size();
  j["constants_of_motion_drift"] = constants_drift.to_json();
  j["notes"] = notes;
  j["status"] = to_string(status());
  return j;
}

CompleteSolutionReport complete_solution_check(const HamiltonianSystem& sys, const ParamFamily& family,
                                               const std::vector<Vector>& nodes,
                                               const CompleteSolutionOptions& options) {
  const Eigen::Index n = sys.n();
  if (family.base_dim() != n || family.n_params() != n || family.out_dim() != n)
    throw DimensionMismatch("a complete solution has n parameters and n components over n coordinates");
  CompleteSolutionReport out;
  out.closedness.op = "closedness_defect";
  out.dh.op = "dH_defect";
  out.constants_drift.op = "constants_of_motion_drift";
  out.closedness.tolerance = out.dh.tolerance = options.tolerance;
  out.constants_drift.tolerance = options.drift_tolerance;
  out.min_abs_det = nodes.empty() ? 0.0 : std::numeric_limits<double>::infinity();

  const VectorFieldSection z = hamiltonian_vector_field(sys);
  std::size_t truncated = 0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const Vector& node = nodes[k];
    const Vector q = node.head(n);
    const Vector lambda = node.tail(n);
    OneFormSection alpha(family.slice(lambda));
    try {
      Matrix w = pullback_symplectic_form(alpha, q);
      double c = max_abs(w);
      out.closedness.add({node, Vector::Constant(1, c), c});
      Vector g = pulled_back_hamiltonian_gradient(sys, alpha, q);
      out.dh.add({node, g, g.norm()});
      // Jacobian of (q, lambda) -> (q, alpha_lambda(q)) is block triangular.
      double det = std::abs(family.joint().jacobian(node).rightCols(n).determinant());
      out.min_abs_det = std::min(out.min_abs_det, det);
      if (det < kSingularDeterminant) {
        if (out.singular_nodes.empty()) out.notes.push_back(SingularFamily(k, det).what());
        out.singular_nodes.push_back(k);
        out.constants_drift.add_skip(node, "singular family node");
        continue;
      }
    } catch (const DomainViolation& e) {
      out.closedness.add_skip(node, e.what());
      out.dh.add_skip(node, e.what());
      out.constants_drift.add_skip(node, e.what());
      continue;
    }

    FlowOptions fo;
    fo.estimate_errors = false;
    fo.truncate_on_failure = true;
    FlowResult flow = flow_midpoint(z, phase_point(q, alpha(q)), options.t_end, options.dt, fo);
    Vector current = lambda;
    double drift = 0.0;
    Vector worst = Vector::Zero(n);
    bool left_chart = flow.truncated;
    for (const Vector& state : flow.states) {
      try {
        current = invert_family(family, state.head(n), state.tail(n), current);
      } catch (const Error&) {
        left_chart = true;
        break;
      }
      Vector d = current - lambda;
      if (d.lpNorm<Eigen::Infinity>() > drift) {
        drift = d.lpNorm<Eigen::Infinity>();
        worst = d;
      }
    }
    if (left_chart) ++truncated;
    out.constants_drift.add({node, worst, drift});
  }
  out.notes.push_back("constants of motion F(q, p) = lambda are recovered by Newton inversion of lambda -> alpha_lambda(q)");
  if (truncated > 0) {
    std::ostringstream os;
    os << truncated << " trajectories left the chart of the family before T and were compared up to that time";
    out.notes.push_back(os.str());
  }
  return out;
}

}  // namespace hj
