#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hj/hamiltonian.hpp"

namespace hj {

/// Coordinate names q1..qn, v1..vn of the natural chart on TQ.
std::vector<std::string> velocity_phase_vars(int n);

/// Autonomous Lagrangian system on TQ. The Cartan form and the energy are
/// built symbolically from L: theta_L = (dL/dv^i) dq^i, E_L = v^i dL/dv^i - L.
class LagrangianSystem {
 public:
  LagrangianSystem(int n, ScalarField lagrangian);
  static LagrangianSystem parse(int n, const std::string& text);

  int n() const { return n_; }
  const ScalarField& lagrangian() const { return l_; }
  /// dL/dv^i as fields over (q, v).
  const std::vector<ScalarField>& momenta() const { return momenta_; }
  const ScalarField& energy() const { return energy_; }

  /// 2-norm condition number of d2L/dv dv at (q, v).
  double legendre_condition(const Vector& qv) const;

 private:
  int n_;
  ScalarField l_;
  std::vector<ScalarField> momenta_;
  ScalarField energy_;
};

/// Condition numbers above this make the Legendre map singular.
inline constexpr double kSingularCondition = 1e12;

/// (q, v) -> (q, dL/dv).
Vector legendre(const LagrangianSystem& sys, const Vector& qv);

/// Solves dL/dv(q, v) = p for v by Newton, starting from v = p unless a seed
/// is given. Returns (q, v).
Vector legendre_inverse(const LagrangianSystem& sys, const Vector& qp, const std::optional<Vector>& seed = {});

/// Gamma_L on (q, v): q' = v, v' = W^{-1} (dL/dq - d2L/dv dq v) with W the
/// velocity Hessian.
VectorFieldSection euler_lagrange_field(const LagrangianSystem& sys);

struct LagHJReport {
  ResidualReport pullback_omega;  // max-norm of X^* omega_L
  ResidualReport de;              // ||grad(X^* E_L)||
  ResidualReport generalized;     // i(X)(X^* omega_L) - d(X^* E_L)
  std::optional<ResidualReport> eq4;

  Status status() const;
  nlohmann::ordered_json to_json() const;
};

/// HJ residuals of a vector field X on Q, computed through the embedding
/// q -> (q, X(q)). X must carry a Jacobian. When s is given, eq4 measures
/// max |dS/dq^i - dL/dv^i(q, X(q))|.
LagHJReport lag_hj_residuals(const LagrangianSystem& sys, const VectorFieldSection& x,
                             const std::vector<Vector>& samples, double tolerance = 1e-8,
                             const ScalarField* s = nullptr);

/// alpha = FL o X, with its Jacobian by the chain rule.
OneFormSection to_one_form(const LagrangianSystem& sys, const VectorFieldSection& x);

/// X = FL^{-1} o alpha, solved fiberwise; the Jacobian is
/// W^{-1} (J_alpha - d2L/dv dq).
VectorFieldSection to_vector_field(const LagrangianSystem& sys, const OneFormSection& alpha);

/// H = E_L o FL^{-1}, evaluated pointwise by Newton. Gradient (-dL/dq, v) and
/// Hessian come from the implicit function theorem.
HamiltonianSystem hamiltonian_from_lagrangian(const LagrangianSystem& sys);

}  // namespace hj
