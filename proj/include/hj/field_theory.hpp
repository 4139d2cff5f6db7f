#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hj/hamiltonian.hpp"

namespace hj {

/// Coordinates of a first-order field theory over a base of dimension m with
/// fibre dimension n:
///   base x1..xm, fibre y1..yn,
///   velocities y{a}_{i} and momenta p{a}_{i} (fibre index a outer, base index i inner).
/// For small dimensions the usual spellings are accepted as aliases: t, x for
/// the base, y for y1, and yt, yx, pt, px for the jet and momentum coordinates.
struct FieldChart {
  int m = 1;
  int n = 1;

  FieldChart(int m, int n);

  std::vector<std::string> base_vars() const;      // x1..xm
  std::vector<std::string> fiber_vars() const;     // y1..yn
  std::vector<std::string> velocity_vars() const;  // y{a}_{i}
  std::vector<std::string> momentum_vars() const;  // p{a}_{i}
  /// (x, y): the domain of W and psi.
  std::vector<std::string> total_vars() const;
  /// (x, y, y{a}_{i}): the domain of L.
  std::vector<std::string> lagrangian_vars() const;
  /// (x, y, p{a}_{i}): the domain of H.
  std::vector<std::string> hamiltonian_vars() const;
  AliasMap aliases() const;

  int mn() const { return m * n; }
  /// Index of y{a}_{i} (or p{a}_{i}) in the velocity (momentum) block; a, i are 0-based.
  int jet_index(int a, int i) const { return a * m + i; }
};

class FieldTheory {
 public:
  static FieldTheory from_lagrangian(int m, int n, ScalarField lagrangian);
  static FieldTheory from_hamiltonian(int m, int n, SmoothFunction hamiltonian);
  static FieldTheory parse_lagrangian(int m, int n, const std::string& text);
  static FieldTheory parse_hamiltonian(int m, int n, const std::string& text);

  const FieldChart& chart() const { return chart_; }
  int m() const { return chart_.m; }
  int n() const { return chart_.n; }
  bool has_lagrangian() const { return lagrangian_.has_value(); }
  bool has_hamiltonian() const { return hamiltonian_.has_value(); }
  const ScalarField& lagrangian() const;
  const SmoothFunction& hamiltonian() const;

  /// Condition number of d2L/dy_i^a dy_j^b at a point of (x, y, y_i^a).
  double legendre_condition(const Vector& point) const;

 private:
  FieldTheory(int m, int n) : chart_(m, n) {}

  FieldChart chart_;
  std::optional<ScalarField> lagrangian_;
  std::optional<SmoothFunction> hamiltonian_;
};

/// p_a^i = dL/dy_i^a at a point of (x, y, y_i^a). Throws SingularLegendre when
/// the velocity Hessian is singular there.
Vector field_legendre(const FieldTheory& theory, const Vector& point);

/// Velocities v with dL/dv (x, y, v) = p, by Newton from `seed` (default p).
/// Input and output are (x, y, .) points.
Vector field_legendre_inverse(const FieldTheory& theory, const Vector& xyp,
                              const std::optional<Vector>& seed = std::nullopt);

/// The De Donder-Weyl Hamiltonian p.v - L with v from the inverse Legendre
/// map, with exact gradient and Hessian.
FieldTheory field_hamiltonian_from_lagrangian(const FieldTheory& theory);

/// W^1..W^m over (x, y) and, optionally, a jet field psi over (x, y) with mn
/// components ordered like the velocities.
struct FieldHJCandidate {
  std::vector<ScalarField> w;
  std::vector<ScalarField> psi;

  static FieldHJCandidate parse(const FieldChart& chart, const std::vector<std::string>& w,
                                const std::vector<std::string>& psi = {});
  /// Fix the named parameters; every field must range over (x, y, params).
  static FieldHJCandidate parse(const FieldChart& chart, const std::vector<std::string>& w,
                                const std::vector<std::string>& psi, const std::vector<std::string>& params,
                                std::span<const double> values);
};

/// s_a^i = dW^i/dy^a at a point of (x, y), ordered like the momenta.
Vector induced_section(const FieldChart& chart, const FieldHJCandidate& cand, const Vector& xy);

/// max over nodes of |sum_i dW^i/dx^i + psi_i^a dW^i/dy^a - L(x, y, psi)|.
ResidualReport lag_field_hj_residual(const FieldTheory& theory, const FieldHJCandidate& cand,
                                     const std::vector<Vector>& nodes, double tolerance = 1e-9);

struct HamFieldHJReport {
  ResidualReport residual;
  /// Componentwise range of the induced section s over the evaluated nodes.
  Vector section_min;
  Vector section_max;

  Status status() const { return residual.status(); }
  nlohmann::ordered_json to_json() const;
};

/// max over nodes of |sum_i dW^i/dx^i + H(x, y, dW/dy)|.
HamFieldHJReport ham_field_hj_residual(const FieldTheory& theory, const FieldHJCandidate& cand,
                                       const std::vector<Vector>& nodes, double tolerance = 1e-9);

/// Pointwise comparison of the two residuals under the Legendre map: the
/// Lagrangian residual is evaluated with psi = FL^{-1}(dW/dy), the Hamiltonian
/// one with `hamiltonian` (or the Legendre transform of L when absent).
ResidualReport field_legendre_consistency(const FieldTheory& lagrangian, const FieldHJCandidate& cand,
                                          const std::vector<Vector>& nodes, double tolerance = 1e-9,
                                          const FieldTheory* hamiltonian = nullptr);

/// y-gradient of the Hamiltonian field residual at a point of (x, y).
Vector ham_field_residual_gradient(const FieldTheory& theory, const FieldHJCandidate& cand, const Vector& xy);

/// The mechanical system as a field theory over a one-dimensional base:
/// q^a -> y^a, p_a -> p{a}_{1}, H independent of x1.
FieldTheory field_from_mechanics(const HamiltonianSystem& sys);

struct MechanicsReductionReport {
  ResidualReport value;     // |field residual - (H o dS - E)|
  ResidualReport gradient;  // max |y-gradient of the field residual - grad(H o dS)|
  Status status() const { return combine({value.status(), gradient.status()}); }
  nlohmann::ordered_json to_json() const;
};

/// With W^1 = S(y) - E x1 the field residual at (x1, q) is H(q, dS(q)) - E and
/// its y-gradient is grad(H o dS). Both are compared with the mechanical
/// computations at the samples q.
MechanicsReductionReport mechanics_reduction_defect(const HamiltonianSystem& sys, const GeneratingScalar& s,
                                                    double energy, const std::vector<Vector>& samples,
                                                    double tolerance = 1e-10);

/// Periodic grid x_j = origin + j * length / points on the spatial axis.
struct PeriodicGrid {
  int points = 256;
  double origin = 0.0;
  double length = 6.283185307179586;

  double dx() const { return length / points; }
  Vector nodes() const;
};

/// Field values on the grid: each matrix is points x n.
struct FieldState {
  Matrix y;
  Matrix p0;  // time momenta p{a}_{1}
  Matrix p1;  // space momenta p{a}_{2}
};

struct FieldEvolveOptions {
  int record_stride = 100;
};

struct FieldFlowResult {
  Vector x;
  std::vector<double> times;
  std::vector<FieldState> states;
  std::vector<double> energy;    // integral of H - p1 . dH/dp1 over the period
  double energy_drift = 0.0;     // max |E(t) - E(0)|
  /// max |dH/dp1 - dy/dx| at t = 0, with the spectral derivative of y.
  double initial_constraint = 0.0;
  /// Change of the discrete constraint dH/dp1 - D_x y since t = 0, maximised
  /// over nodes and recorded times.
  double constraint_drift = 0.0;
  bool aborted = false;
  double t_reached = 0.0;
  std::vector<std::string> warnings;

  const FieldState& final_state() const { return states.back(); }
  nlohmann::ordered_json to_json() const;
};

/// Hamilton-De Donder-Weyl equations for m = 2 on a periodic spatial grid:
///   y_t = dH/dp0,  p0_t + D_x p1 = -dH/dy,
/// with p1 carried along by differentiating the constraint D_x y = dH/dp1 in
/// time. D_x is the centred difference; time stepping is classical RK4.
FieldFlowResult ddw_evolve(const FieldTheory& theory, const PeriodicGrid& grid, FieldState initial, double t_end,
                           double dt, const FieldEvolveOptions& options = {});

/// Sample initial data given as expressions in x (alias of x2); the lists
/// have n entries each.
FieldState sample_field_data(const FieldChart& chart, const PeriodicGrid& grid, const std::vector<std::string>& y,
                             const std::vector<std::string>& p0, const std::vector<std::string>& p1);

/// Spectral derivative of periodic samples over a period `length`, columnwise
/// (the Nyquist mode of an even grid is dropped).
Matrix spectral_difference(const Matrix& f, double length);

/// Centred periodic difference (f_{j+1} - f_{j-1}) / (2 dx), columnwise.
Matrix centred_difference(const Matrix& f, double dx);

}  // namespace hj
