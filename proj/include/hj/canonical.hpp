#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hj/hamiltonian.hpp"

namespace hj {

/// Coordinate names q1..qn, qt1..qtn of a type-1 generating function.
std::vector<std::string> two_point_vars(int n);

/// Type-1 generating function S(q, qt). The induced map (q, p) -> (qt, pt)
/// is defined implicitly by dS/dq = p, pt = -dS/dqt.
class GeneratingFunction2Point {
 public:
  GeneratingFunction2Point(int n, ScalarField s);
  static GeneratingFunction2Point parse(int n, const std::string& text);

  int n() const { return n_; }
  const ScalarField& field() const { return s_; }
  /// d2S/dq dqt at (q, qt); rows q, columns qt.
  Matrix mixed_hessian(const Vector& q, const Vector& qt) const;

 private:
  int n_;
  ScalarField s_;
};

/// Guess for qt given (q, p); the default is qt = q.
using TransformGuess = std::function<Vector(const Vector& qp)>;

/// (q, p) -> (qt, pt). Throws DegenerateGenerator when the mixed Hessian has
/// condition number above 1e12 at the solution, NewtonDivergence otherwise.
Vector induced_transform(const GeneratingFunction2Point& g, const Vector& qp,
                         const std::optional<Vector>& qt_guess = {});

/// (qt, pt) -> (q, p), solving -dS/dqt(q, qt) = pt for q from `q_guess`
/// (default q = qt).
Vector inverse_transform(const GeneratingFunction2Point& g, const Vector& qtpt,
                         const std::optional<Vector>& q_guess = {});

/// A map of T*R^n given by a forward evaluator.
class CanonicalMap {
 public:
  CanonicalMap(int n, std::function<Vector(const Vector&)> forward);
  static CanonicalMap from_generator(const GeneratingFunction2Point& g, TransformGuess guess = {});

  int n() const { return n_; }
  Vector operator()(const Vector& qp) const { return forward_(qp); }

 private:
  int n_;
  std::function<Vector(const Vector&)> forward_;
};

/// max-entry norm of J^T Omega J - Omega with J from central differences of
/// the forward map (step 1e-6).
ResidualReport symplectomorphism_defect(const CanonicalMap& map, const std::vector<Vector>& samples,
                                        double tolerance = 1e-6);

/// Which half of the transformed coordinates must stay constant.
enum class EquilibriumBlock { Momenta, Positions, Both };

std::string to_string(EquilibriumBlock b);

struct EquilibriumOptions {
  double t_end = 1.0;
  double dt = 1e-3;
  double tolerance = 1e-6;
  EquilibriumBlock block = EquilibriumBlock::Momenta;
  TransformGuess guess;
  int record_stride = 10;
};

struct EquilibriumReport {
  EquilibriumBlock block = EquilibriumBlock::Momenta;
  ResidualReport asserted;        // drift of the asserted block
  ResidualReport not_asserted;    // drift of the other block, informational
  std::size_t skipped_states = 0;  // trajectory points where the transform failed
  std::vector<std::string> notes;

  Status status() const { return asserted.status(); }
  nlohmann::ordered_json to_json() const;
};

/// Integrates Z_H from each start (q, p) with RK4, transforms recorded states
/// (warm-started along the trajectory) and reports the drift of the
/// transformed coordinates from their initial values. States where the
/// transform fails are skipped and counted.
EquilibriumReport equilibrium_defect(const GeneratingFunction2Point& g, const HamiltonianSystem& sys,
                                     const std::vector<Vector>& starts, const EquilibriumOptions& options = {});

/// A complete solution given by generating scalars S_lambda(q) = S(q, lambda).
struct GeneratingFamily {
  int n = 0;
  ScalarField s;  // over q1..qn followed by the parameters
  std::vector<std::string> param_names;

  /// alpha_lambda = d_q S(., lambda) as a ParamFamily.
  ParamFamily differential() const;
};

GeneratingFamily make_generating_family(int n, const std::string& text, std::vector<std::string> param_names);

/// lambda -> qt: S(q, lambda) read as S(q, qt).
GeneratingFunction2Point complete_to_canonical(const GeneratingFamily& fam);

/// qt -> lambda, with parameters named `param_names` (default l1..ln).
GeneratingFamily canonical_to_complete(const GeneratingFunction2Point& g, std::vector<std::string> param_names = {});

}  // namespace hj
