#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hj/dynamics.hpp"

namespace hj {

/// Coordinate names q1..qn, p1..pn of the canonical chart on T*Q.
std::vector<std::string> configuration_vars(int n, const std::string& prefix = "q");
std::vector<std::string> phase_space_vars(int n);

/// Autonomous Hamiltonian system on T*Q in natural coordinates (q, p), with
/// the canonical symplectic form dq^i ^ dp_i.
class HamiltonianSystem {
 public:
  HamiltonianSystem(int n, SmoothFunction hamiltonian);
  static HamiltonianSystem parse(int n, const std::string& text);

  int n() const { return n_; }
  const SmoothFunction& hamiltonian() const { return h_; }

 private:
  int n_;
  SmoothFunction h_;
};

/// A 1-form alpha = alpha_i(q) dq^i on Q, i.e. a section q -> (q, alpha(q)).
class OneFormSection : public SmoothMap {
 public:
  OneFormSection() = default;
  explicit OneFormSection(SmoothMap map);
  static OneFormSection from_fields(std::vector<ScalarField> components);
  static OneFormSection parse(int n, const std::vector<std::string>& texts);

  int n() const { return static_cast<int>(in_dim()); }
};

/// Local generating function S with alpha = dS.
class GeneratingScalar {
 public:
  explicit GeneratingScalar(ScalarField s);
  const ScalarField& field() const { return s_; }
  /// dS by autodiff; its Jacobian is the (exactly symmetric) Hessian of S.
  OneFormSection differential() const;

 private:
  ScalarField s_;
};

/// Z_H = (dH/dp, -dH/dq), tagged canonical.
VectorFieldSection hamiltonian_vector_field(const HamiltonianSystem& sys);

/// X(q) = dH/dp (q, alpha(q)).
VectorFieldSection associated_vector_field(const HamiltonianSystem& sys, const OneFormSection& alpha);

/// The function alpha^*H : q -> H(q, alpha(q)) and its gradient.
double pulled_back_hamiltonian(const HamiltonianSystem& sys, const OneFormSection& alpha, const Vector& q);
Vector pulled_back_hamiltonian_gradient(const HamiltonianSystem& sys, const OneFormSection& alpha, const Vector& q);

/// Residual of i(X) d(alpha) = -d(alpha^*H): r = i(X) d(alpha) + d(alpha^*H).
/// X defaults to the associated vector field.
ResidualReport generalized_hj_residual(const HamiltonianSystem& sys, const OneFormSection& alpha,
                                       const std::vector<Vector>& samples, double tolerance = 1e-8,
                                       const VectorFieldSection* x = nullptr);

struct StandardHJReport {
  ResidualReport closedness;
  ResidualReport dh;

  Status status() const { return combine({closedness.status(), dh.status()}); }
  nlohmann::ordered_json to_json() const;
};

/// closedness = max_{i<j} |d alpha_i/dq^j - d alpha_j/dq^i|; dh = ||grad(H o alpha)||.
StandardHJReport standard_hj_residual(const HamiltonianSystem& sys, const OneFormSection& alpha,
                                      const std::vector<Vector>& samples, double tolerance = 1e-8);

/// Pullback of dq^i ^ dp_i along q -> (q, alpha(q)), as the matrix
/// w(e_a, e_b).
Matrix pullback_symplectic_form(const OneFormSection& alpha, const Vector& q);

struct TrajectoryOptions {
  double dt = 1e-3;
  bool midpoint = false;  // implicit midpoint instead of RK4 for Z_H
};

/// For each start q0 integrate Z_H from (q0, alpha(q0)) over [0, T]; the
/// sample norm is max_t ||p(t) - alpha(q(t))||. Starts are reported in order.
ResidualReport invariance_defect(const HamiltonianSystem& sys, const OneFormSection& alpha,
                                 const std::vector<Vector>& starts, double t_end, double tolerance = 1e-6,
                                 const TrajectoryOptions& options = {});

struct ReconstructResult {
  FlowResult base_curve;
  std::vector<Vector> lifted_curve;
  FlowResult direct_curve;
  double max_gap = 0.0;
  bool partial = false;
  double t_reached = 0.0;
  std::string note;

  nlohmann::ordered_json to_json() const;
};

/// Integrate X on Q, lift by alpha, and compare with the direct flow of Z_H.
ReconstructResult reconstruct(const HamiltonianSystem& sys, const OneFormSection& alpha, const Vector& q0,
                              double t_end, const TrajectoryOptions& options = {});

struct CompleteSolutionReport {
  ResidualReport closedness;
  ResidualReport dh;
  double min_abs_det = 0.0;
  std::vector<std::size_t> singular_nodes;
  ResidualReport constants_drift;
  std::vector<std::string> notes;

  Status status() const;
  nlohmann::ordered_json to_json() const;
};

struct CompleteSolutionOptions {
  double tolerance = 1e-8;
  double drift_tolerance = 1e-7;
  double t_end = 1.0;
  double dt = 1e-2;
};

/// Nodes are (q, lambda) points. Checks every alpha_lambda, the Jacobian of
/// (q, lambda) -> (q, alpha_lambda(q)), and that the parameters recovered by
/// Newton inversion of lambda -> alpha_lambda(q) = p stay constant along the
/// flow of Z_H. Trajectories are followed until they leave the family's chart.
CompleteSolutionReport complete_solution_check(const HamiltonianSystem& sys, const ParamFamily& family,
                                               const std::vector<Vector>& nodes,
                                               const CompleteSolutionOptions& options = {});

/// Solve alpha_lambda(q) = p for lambda by Newton from `guess`.
Vector invert_family(const ParamFamily& family, const Vector& q, const Vector& p, const Vector& guess);

}  // namespace hj
