#include "hj/lagrangian.hpp"

#include "hj/newton.hpp"

namespace hj {

std::vector<std::string> velocity_phase_vars(int n) {
  auto v = configuration_vars(n, "q");
  auto dv = configuration_vars(n, "v");
  v.insert(v.end(), dv.begin(), dv.end());
  return v;
}

LagrangianSystem::LagrangianSystem(int n, ScalarField lagrangian) : n_(n), l_(std::move(lagrangian)) {
  if (n < 1) throw DimensionMismatch("a Lagrangian system needs n >= 1");
  if (l_.arity() != 2 * n) throw DimensionMismatch("L must depend on exactly 2n tangent-bundle coordinates");
  const auto& vars = l_.vars();
  Expression e;
  for (int i = 0; i < n; ++i) {
    ScalarField p = l_.partial(vars[n + i]);
    momenta_.push_back(p);
    e = e + Expression::variable(vars[n + i]) * p.expression();
  }
  energy_ = ScalarField::from_expression(e - l_.expression(), vars);
}

LagrangianSystem LagrangianSystem::parse(int n, const std::string& text) {
  return LagrangianSystem(n, ScalarField::compile(text, velocity_phase_vars(n)));
}

namespace {

Vector join(const Vector& a, const Vector& b) {
  Vector x(a.size() + b.size());
  x << a, b;
  return x;
}

// d2L/dv dv at (q, v).
Matrix velocity_hessian(const LagrangianSystem& sys, const Vector& qv) {
  const int n = sys.n();
  std::vector<int> rows(n);
  for (int i = 0; i < n; ++i) rows[i] = n + i;
  Vector g;
  Matrix h;
  sys.lagrangian().partial_hessian(qv, rows, g, h);
  return h.rightCols(n);
}

Matrix checked_velocity_hessian(const LagrangianSystem& sys, const Vector& qv) {
  Matrix w = velocity_hessian(sys, qv);
  const double c = condition_number(w);
  if (!(c <= kSingularCondition)) throw SingularLegendre(c);
  return w;
}

}  // namespace

double LagrangianSystem::legendre_condition(const Vector& qv) const {
  return condition_number(velocity_hessian(*this, qv));
}

Vector legendre(const LagrangianSystem& sys, const Vector& qv) {
  const int n = sys.n();
  if (qv.size() != 2 * n) throw DimensionMismatch("legendre expects a (q, v) point");
  return join(qv.head(n), sys.lagrangian().gradient(qv).tail(n));
}

Vector legendre_inverse(const LagrangianSystem& sys, const Vector& qp, const std::optional<Vector>& seed) {
  const int n = sys.n();
  if (qp.size() != 2 * n) throw DimensionMismatch("legendre_inverse expects a (q, p) point");
  const Vector q = qp.head(n);
  const Vector p = qp.tail(n);
  auto residual = [&](const Vector& v) -> Vector { return sys.lagrangian().gradient(join(q, v)).tail(n) - p; };
  auto jacobian = [&](const Vector& v) -> Matrix { return velocity_hessian(sys, join(q, v)); };
  Vector v0 = seed ? *seed : p;
  Vector v;
  try {
    v = newton_solve(residual, jacobian, v0, {}, "inverse Legendre map").x;
  } catch (const NewtonDivergence&) {
    // A singular velocity Hessian at the seed is the usual cause; say so.
    const double c = condition_number(velocity_hessian(sys, join(q, v0)));
    if (!(c <= kSingularCondition)) throw SingularLegendre(c);
    throw;
  }
  Vector qv = join(q, v);
  checked_velocity_hessian(sys, qv);
  return qv;
}

VectorFieldSection euler_lagrange_field(const LagrangianSystem& sys) {
  const int n = sys.n();
  const LagrangianSystem s = sys;
  std::vector<int> rows(n);
  for (int i = 0; i < n; ++i) rows[i] = n + i;
  return VectorFieldSection(SmoothMap(2 * n, 2 * n, [s, n, rows](const Vector& x) -> Vector {
    Vector g;
    Matrix h;  // rows of v, columns (q, v)
    s.lagrangian().partial_hessian(x, rows, g, h);
    Matrix w = h.rightCols(n);
    const double c = condition_number(w);
    if (!(c <= kSingularCondition)) throw SingularLegendre(c);
    Vector v = x.tail(n);
    Vector rhs = g.head(n) - h.leftCols(n) * v;
    return join(v, w.fullPivLu().solve(rhs));
  }));
}

Status LagHJReport::status() const {
  std::vector<Status> parts{pullback_omega.status(), de.status(), generalized.status()};
  if (eq4) parts.push_back(eq4->status());
  return combine(parts);
}

nlohmann::ordered_json LagHJReport::to_json() const {
  nlohmann::ordered_json j;
  j["op"] = "lag_hj_residuals";
  j["pullback_omega_defect"] = pullback_omega.to_json();
  j["dE_defect"] = de.to_json();
  j["generalized_defect"] = generalized.to_json();
  if (eq4) j["eq4_defect"] = eq4->to_json();
  j["status"] = to_string(status());
  return j;
}

namespace {

// J_alpha for alpha = FL o X: d2L/dv dq + d2L/dv dv J_X.
Matrix fiber_derivative_jacobian(const LagrangianSystem& sys, const Vector& qv, const Matrix& jx) {
  const int n = sys.n();
  std::vector<int> rows(n);
  for (int i = 0; i < n; ++i) rows[i] = n + i;
  Vector g;
  Matrix h;
  sys.lagrangian().partial_hessian(qv, rows, g, h);
  return h.leftCols(n) + h.rightCols(n) * jx;
}

}  // namespace

LagHJReport lag_hj_residuals(const LagrangianSystem& sys, const VectorFieldSection& x,
                             const std::vector<Vector>& samples, double tolerance, const ScalarField* s) {
  const int n = sys.n();
  if (x.dim() != n) throw DimensionMismatch("X must be a vector field on the n-dimensional configuration chart");
  if (!x.has_jacobian()) throw Error("lag_hj_residuals needs the Jacobian of X");
  if (s && s->arity() != n) throw DimensionMismatch("S must be a function of q1..qn");
  LagHJReport out;
  out.pullback_omega.op = "pullback_omega_defect";
  out.de.op = "dE_defect";
  out.generalized.op = "generalized_defect";
  for (ResidualReport* r : {&out.pullback_omega, &out.de, &out.generalized}) r->tolerance = tolerance;
  if (s) {
    out.eq4.emplace();
    out.eq4->op = "eq4_defect";
    out.eq4->tolerance = tolerance;
  }
  for (const Vector& q : samples) {
    try {
      const Vector xq = x(q);
      const Matrix jx = x.jacobian(q);
      const Vector qv = join(q, xq);
      const Matrix ja = fiber_derivative_jacobian(sys, qv, jx);
      const Matrix w = ja - ja.transpose();
      const Vector ge = sys.energy().gradient(qv);
      const Vector grad_e = ge.head(n) + jx.transpose() * ge.tail(n);
      const Vector r = w * xq + grad_e;
      const double wn = max_abs(w);
      out.pullback_omega.add({q, Eigen::Map<const Vector>(w.data(), w.size()), wn});
      out.de.add({q, grad_e, grad_e.norm()});
      out.generalized.add({q, r, r.lpNorm<Eigen::Infinity>()});
      if (s) {
        Vector d = s->gradient(q) - sys.lagrangian().gradient(qv).tail(n);
        out.eq4->add({q, d, d.lpNorm<Eigen::Infinity>()});
      }
    } catch (const DomainViolation& e) {
      for (ResidualReport* r : {&out.pullback_omega, &out.de, &out.generalized}) r->add_skip(q, e.what());
      if (s) out.eq4->add_skip(q, e.what());
    }
  }
  return out;
}

OneFormSection to_one_form(const LagrangianSystem& sys, const VectorFieldSection& x) {
  const int n = sys.n();
  if (x.dim() != n) throw DimensionMismatch("X must live on the configuration chart");
  const LagrangianSystem s = sys;
  const VectorFieldSection xf = x;
  SmoothMap::JacobianFn jac;
  if (x.has_jacobian())
    jac = [s, xf](const Vector& q) -> Matrix { return fiber_derivative_jacobian(s, join(q, xf(q)), xf.jacobian(q)); };
  return OneFormSection(SmoothMap(
      n, n, [s, xf, n](const Vector& q) -> Vector { return s.lagrangian().gradient(join(q, xf(q))).tail(n); },
      std::move(jac)));
}

VectorFieldSection to_vector_field(const LagrangianSystem& sys, const OneFormSection& alpha) {
  const int n = sys.n();
  if (alpha.n() != n) throw DimensionMismatch("alpha must be a 1-form on the configuration chart");
  const LagrangianSystem s = sys;
  const OneFormSection a = alpha;
  SmoothMap::JacobianFn jac;
  if (alpha.has_jacobian()) {
    jac = [s, a, n](const Vector& q) -> Matrix {
      Vector qv = legendre_inverse(s, join(q, a(q)));
      std::vector<int> rows(n);
      for (int i = 0; i < n; ++i) rows[i] = n + i;
      Vector g;
      Matrix h;
      s.lagrangian().partial_hessian(qv, rows, g, h);
      return h.rightCols(n).fullPivLu().solve(a.jacobian(q) - h.leftCols(n));
    };
  }
  return VectorFieldSection(SmoothMap(
      n, n, [s, a, n](const Vector& q) -> Vector { return legendre_inverse(s, join(q, a(q))).tail(n); },
      std::move(jac)));
}

HamiltonianSystem hamiltonian_from_lagrangian(const LagrangianSystem& sys) {
  const int n = sys.n();
  const LagrangianSystem s = sys;
  auto value = [s](const Vector& qp) { return s.energy().value(legendre_inverse(s, qp)); };
  auto gradient = [s, n](const Vector& qp) -> Vector {
    Vector qv = legendre_inverse(s, qp);
    return join(-s.lagrangian().gradient(qv).head(n), qv.tail(n));
  };
  auto hessian = [s, n](const Vector& qp) -> Matrix {
    Vector qv = legendre_inverse(s, qp);
    Matrix h = s.lagrangian().hessian(qv);
    const Matrix lqq = h.topLeftCorner(n, n);
    const Matrix lvq = h.bottomLeftCorner(n, n);
    const Matrix winv = h.bottomRightCorner(n, n).inverse();
    Matrix out(2 * n, 2 * n);
    out.topLeftCorner(n, n) = -lqq + lvq.transpose() * winv * lvq;
    out.bottomLeftCorner(n, n) = -winv * lvq;
    out.topRightCorner(n, n) = out.bottomLeftCorner(n, n).transpose();
    out.bottomRightCorner(n, n) = winv;
    return 0.5 * (out + out.transpose());
  };
  return HamiltonianSystem(n, SmoothFunction(2 * n, value, gradient, hessian));
}

}  // namespace hj
