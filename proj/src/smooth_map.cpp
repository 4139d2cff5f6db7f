#include "hj/smooth_map.hpp"

#include <limits>

namespace hj {

SmoothFunction::SmoothFunction(const ScalarField& f)
    : arity_(f.arity()),
      value_([f](const Vector& x) { return f.value(x); }),
      gradient_([f](const Vector& x) { return f.gradient(x); }),
      hessian_([f](const Vector& x) { return f.hessian(x); }),
      field_(f) {}

SmoothFunction::SmoothFunction(Eigen::Index arity, ValueFn value, GradFn gradient, HessFn hessian)
    : arity_(arity), value_(std::move(value)), gradient_(std::move(gradient)), hessian_(std::move(hessian)) {}

Matrix SmoothFunction::hessian(const Vector& x) const {
  if (!hessian_) throw Error("function has no second derivatives");
  return hessian_(x);
}

SmoothMap::SmoothMap(Eigen::Index in_dim, Eigen::Index out_dim, ValueFn value, JacobianFn jacobian)
    : in_dim_(in_dim), out_dim_(out_dim), value_(std::move(value)), jacobian_(std::move(jacobian)) {}

SmoothMap SmoothMap::from_fields(std::vector<ScalarField> components) {
  if (components.empty()) throw DimensionMismatch("map needs at least one component");
  const Eigen::Index in = components.front().arity();
  for (const auto& c : components) {
    if (c.vars() != components.front().vars())
      throw DimensionMismatch("map components must share one variable list");
  }
  const Eigen::Index out = static_cast<Eigen::Index>(components.size());
  auto comps = std::make_shared<const std::vector<ScalarField>>(components);
  SmoothMap m(
      in, out,
      [comps](const Vector& x) {
        Vector y(static_cast<Eigen::Index>(comps->size()));
        for (std::size_t i = 0; i < comps->size(); ++i) y[static_cast<Eigen::Index>(i)] = (*comps)[i].value(x);
        return y;
      },
      [comps, in](const Vector& x) {
        Matrix j(static_cast<Eigen::Index>(comps->size()), in);
        for (std::size_t i = 0; i < comps->size(); ++i)
          j.row(static_cast<Eigen::Index>(i)) = (*comps)[i].gradient(x).transpose();
        return j;
      });
  m.fields_ = std::move(components);
  return m;
}

SmoothMap SmoothMap::identity(Eigen::Index dim) {
  return SmoothMap(
      dim, dim, [](const Vector& x) { return x; }, [dim](const Vector&) { return Matrix::Identity(dim, dim); });
}

Vector SmoothMap::operator()(const Vector& x) const {
  if (x.size() != in_dim_)
    throw DimensionMismatch("map expects " + std::to_string(in_dim_) + " inputs, got " + std::to_string(x.size()));
  return value_(x);
}

Matrix SmoothMap::jacobian(const Vector& x) const {
  if (!jacobian_) throw Error("map has no Jacobian");
  if (x.size() != in_dim_)
    throw DimensionMismatch("map expects " + std::to_string(in_dim_) + " inputs, got " + std::to_string(x.size()));
  return jacobian_(x);
}

SmoothMap compose(const SmoothMap& g, const SmoothMap& f) {
  if (g.in_dim() != f.out_dim()) throw DimensionMismatch("compose: dimension mismatch");
  SmoothMap::JacobianFn jac;
  if (g.has_jacobian() && f.has_jacobian())
    jac = [g, f](const Vector& x) -> Matrix { return g.jacobian(f(x)) * f.jacobian(x); };
  return SmoothMap(f.in_dim(), g.out_dim(), [g, f](const Vector& x) { return g(f(x)); }, std::move(jac));
}

double condition_number(const Matrix& m) {
  if (m.size() == 0) return 1.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  double smin = s[s.size() - 1];
  if (!(smin > 0.0)) return std::numeric_limits<double>::infinity();
  return s[0] / smin;
}

Matrix canonical_symplectic_matrix(Eigen::Index n) {
  Matrix omega = Matrix::Zero(2 * n, 2 * n);
  omega.topRightCorner(n, n) = Matrix::Identity(n, n);
  omega.bottomLeftCorner(n, n) = -Matrix::Identity(n, n);
  return omega;
}

}  // namespace hj
