#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>

#include "hj/scalar_field.hpp"

namespace hj {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Real-valued function with derivatives up to second order. Either backed
/// by a ScalarField or assembled numerically (e.g. E_L composed with an
/// inverse Legendre map).
class SmoothFunction {
 public:
  using ValueFn = std::function<double(const Vector&)>;
  using GradFn = std::function<Vector(const Vector&)>;
  using HessFn = std::function<Matrix(const Vector&)>;

  SmoothFunction() = default;
  SmoothFunction(const ScalarField& f);  // NOLINT: fields are the common case
  SmoothFunction(Eigen::Index arity, ValueFn value, GradFn gradient, HessFn hessian = {});

  Eigen::Index arity() const { return arity_; }
  double operator()(const Vector& x) const { return value_(x); }
  Vector gradient(const Vector& x) const { return gradient_(x); }
  bool has_hessian() const { return static_cast<bool>(hessian_); }
  Matrix hessian(const Vector& x) const;

  /// The backing field when this function came from an expression.
  const ScalarField* field() const { return field_ ? &*field_ : nullptr; }

 private:
  Eigen::Index arity_ = 0;
  ValueFn value_;
  GradFn gradient_;
  HessFn hessian_;
  std::optional<ScalarField> field_;
};

/// Smooth map between Euclidean charts, x -> f(x) with Jacobian
/// (out_dim x in_dim).
class SmoothMap {
 public:
  using ValueFn = std::function<Vector(const Vector&)>;
  using JacobianFn = std::function<Matrix(const Vector&)>;

  SmoothMap() = default;
  SmoothMap(Eigen::Index in_dim, Eigen::Index out_dim, ValueFn value, JacobianFn jacobian = {});

  /// Components are ScalarFields over the same variable list.
  static SmoothMap from_fields(std::vector<ScalarField> components);
  static SmoothMap identity(Eigen::Index dim);

  Eigen::Index in_dim() const { return in_dim_; }
  Eigen::Index out_dim() const { return out_dim_; }
  Vector operator()(const Vector& x) const;
  bool has_jacobian() const { return static_cast<bool>(jacobian_); }
  Matrix jacobian(const Vector& x) const;

  /// Non-empty only for maps built with from_fields.
  const std::vector<ScalarField>& fields() const { return fields_; }

 private:
  Eigen::Index in_dim_ = 0;
  Eigen::Index out_dim_ = 0;
  ValueFn value_;
  JacobianFn jacobian_;
  std::vector<ScalarField> fields_;
};

/// g ∘ f, with the chain-rule Jacobian when both factors have one.
SmoothMap compose(const SmoothMap& g, const SmoothMap& f);

/// 2-norm condition number; +inf for singular matrices.
double condition_number(const Matrix& m);

/// The canonical antisymmetric matrix [[0, I], [-I, 0]] of size 2n.
Matrix canonical_symplectic_matrix(Eigen::Index n);

inline double max_abs(const Eigen::Ref<const Matrix>& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace hj
