#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hj/dynamics.hpp"

namespace hj {

/// Natural chart of the order-r tangent bundle of R^n: coordinates q{i}_{A}
/// for 0 <= i <= r, 1 <= A <= n, ordered by i then A.
class JetChart {
 public:
  JetChart(int n, int order);

  int n() const { return n_; }
  int order() const { return order_; }
  Eigen::Index dim() const { return static_cast<Eigen::Index>(n_) * (order_ + 1); }
  const std::vector<std::string>& vars() const { return vars_; }

  static std::string name(int i, int a);  // "q{i}_{a}", a is 1-based
  /// Order of a jet variable name, or -1 if the name is not one.
  static int order_of(std::string_view name);

 private:
  int n_;
  int order_;
  std::vector<std::string> vars_;
};

/// Total derivative sum_i q_{i+1}^A df/dq_i^A, built symbolically. Works on
/// any expression over jet variables; the result is one order higher.
Expression total_derivative(const Expression& f);

/// d_T of a field over `chart`, as a field over the chart of order + 1.
ScalarField total_derivative(const ScalarField& f, const JetChart& chart);

/// L over the order-k chart, k in {1, 2, 3}.
class HigherLagrangian {
 public:
  HigherLagrangian(int n, int k, ScalarField lagrangian);
  static HigherLagrangian parse(int n, int k, const std::string& text);

  int n() const { return n_; }
  int k() const { return k_; }
  const ScalarField& lagrangian() const { return l_; }

  /// p^i_A, i = 0..k-1 (outer), A = 1..n (inner), over the order-(2k-1) chart.
  const std::vector<ScalarField>& momenta() const { return momenta_; }
  /// E_L = sum_{r=1..k} q_r^A p^{r-1}_A - L over the order-(2k-1) chart.
  const ScalarField& energy() const { return energy_; }
  /// Euler-Lagrange expressions sum_i (-1)^i d_T^i (dL/dq_i^A) over the order-2k chart.
  const std::vector<ScalarField>& euler_lagrange() const { return el_; }

  /// Condition number of d2L/dq_k dq_k at a point of the order-k chart.
  double regularity_condition(const Vector& jet_k) const;

 private:
  int n_;
  int k_;
  ScalarField l_;
  std::vector<ScalarField> momenta_;
  ScalarField energy_;
  std::vector<ScalarField> el_;
};

/// Highest jet order appearing in a field's expression (0 if none).
int max_jet_order(const ScalarField& f);

/// The flow X_L on the order-(2k-1) chart: the derivative of (q_0..q_{2k-1})
/// is (q_1..q_{2k-1}, q_{2k}) with q_{2k} solved from the Euler-Lagrange
/// equations. Throws SingularLegendre when the top Hessian is singular.
VectorFieldSection higher_el_field(const HigherLagrangian& lag);

FlowResult higher_el_flow(const HigherLagrangian& lag, const Vector& x0, double t_end, double dt,
                          const FlowOptions& options = {});

/// Section (q_0..q_{k-1}) -> (q_k..q_{2k-1}), kn components over the
/// order-(k-1) chart.
class JetSection {
 public:
  JetSection(int n, int k, std::vector<ScalarField> components);
  static JetSection parse(int n, int k, const std::vector<std::string>& texts);

  int n() const { return n_; }
  int k() const { return k_; }
  const SmoothMap& map() const { return map_; }

 private:
  int n_;
  int k_;
  SmoothMap map_;
};

struct HigherHJReport {
  ResidualReport tangency;    // fiber part of X_L minus J_s times its base part
  ResidualReport closedness;  // antisymmetric part of the Jacobian of s^* theta_L
  ResidualReport de;          // ||grad(E_L o s)||
  std::optional<ResidualReport> pde;  // max |dS/dq_i^A - p^i_A o s|
  std::vector<std::string> notes;

  Status status() const;
  nlohmann::ordered_json to_json() const;
};

/// Samples are points of the order-(k-1) chart. S, when given, is a field
/// over that chart.
HigherHJReport higher_hj_residuals(const HigherLagrangian& lag, const JetSection& s,
                                   const std::vector<Vector>& samples, double tolerance = 1e-8,
                                   const ScalarField* generating = nullptr);

}  // namespace hj
