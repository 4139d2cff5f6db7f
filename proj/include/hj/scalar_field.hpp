#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hj/dual.hpp"
#include "hj/errors.hpp"
#include "hj/expression.hpp"

namespace hj {

/// Straight-line program compiled from an expression DAG. Shared
/// sub-expressions are evaluated once.
struct Tape {
  struct Instr {
    Op op;
    Intrinsic fn = Intrinsic::Sin;
    int a = -1;
    int b = -1;
    double constant = 0.0;
    int var = -1;
    int guard = -1;   // index into the guard list, -1 when unguarded
    long power = 0;   // integer exponent when op == Pow and int_power
    bool int_power = false;
  };
  std::vector<Instr> code;
  int guarded_slot_count = 0;
};

/// A compiled real-valued function of named coordinates, differentiable to
/// second order by dual / hyper-dual propagation. Immutable and safe to share
/// between threads.
class ScalarField {
 public:
  ScalarField() = default;

  static ScalarField compile(std::string_view text, std::vector<std::string> vars,
                             const AliasMap& aliases = {});
  static ScalarField from_expression(Expression e, std::vector<std::string> vars);
  static ScalarField constant(double value, std::vector<std::string> vars);

  const Expression& expression() const { return expr_; }
  const std::vector<std::string>& vars() const { return *vars_; }
  Eigen::Index arity() const { return static_cast<Eigen::Index>(vars_->size()); }
  /// Sub-expressions required strictly positive: sqrt/ln arguments and bases
  /// of powers whose exponent is not an integer constant.
  const std::vector<Expression>& domain_guards() const { return *guards_; }

  template <typename T>
  T evaluate(std::span<const T> x) const;

  double value(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::VectorXd gradient(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  Eigen::MatrixXd hessian(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Rows `rows` of the Hessian (all columns) together with the full gradient.
  void partial_hessian(const Eigen::Ref<const Eigen::VectorXd>& x, std::span<const int> rows,
                       Eigen::VectorXd& grad, Eigen::MatrixXd& hess_rows) const;

  /// Symbolic partial derivative, kept over the same variable list.
  ScalarField partial(std::string_view var) const;
  /// Same expression over a different (super)set of variables.
  ScalarField over(std::vector<std::string> vars) const;
  /// Fix some variables to constants; the result ranges over the rest.
  ScalarField bind(const std::vector<std::string>& names, std::span<const double> values) const;
  /// Rename variables; the variable list is renamed accordingly.
  ScalarField rename(const std::map<std::string, std::string, std::less<>>& names) const;

  std::string text() const { return print(expr_); }

 private:
  void build();
  [[noreturn]] void raise_guard(int guard, double value) const;

  Expression expr_;
  std::shared_ptr<const std::vector<std::string>> vars_ =
      std::make_shared<const std::vector<std::string>>();
  std::shared_ptr<const std::vector<Expression>> guards_ =
      std::make_shared<const std::vector<Expression>>();
  std::shared_ptr<const Tape> tape_ = std::make_shared<const Tape>();
};

inline double eval(const ScalarField& f, const Eigen::Ref<const Eigen::VectorXd>& x) { return f.value(x); }
inline Eigen::VectorXd grad(const ScalarField& f, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return f.gradient(x);
}
inline Eigen::MatrixXd hessian(const ScalarField& f, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return f.hessian(x);
}

namespace detail {

inline double pow_general(double a, double b) { return std::pow(a, b); }
template <typename T>
Dual<T> pow_general(const Dual<T>& a, const Dual<T>& b) {
  return exp(b * log(a));
}

}  // namespace detail

template <typename T>
T ScalarField::evaluate(std::span<const T> x) const {
  using std::abs;
  using std::cos;
  using std::exp;
  using std::log;
  using std::sin;
  using std::sqrt;
  using std::tanh;
  if (static_cast<Eigen::Index>(x.size()) != arity())
    throw DimensionMismatch("point has " + std::to_string(x.size()) + " coordinates, field expects " +
                            std::to_string(arity()));
  const auto& code = tape_->code;
  std::vector<T> s(code.size());
  for (std::size_t i = 0; i < code.size(); ++i) {
    const Tape::Instr& in = code[i];
    switch (in.op) {
      case Op::Number: s[i] = T(in.constant); break;
      case Op::Variable: s[i] = x[in.var]; break;
      case Op::Negate: s[i] = -s[in.a]; break;
      case Op::Add: s[i] = s[in.a] + s[in.b]; break;
      case Op::Sub: s[i] = s[in.a] - s[in.b]; break;
      case Op::Mul: s[i] = s[in.a] * s[in.b]; break;
      case Op::Div: s[i] = s[in.a] / s[in.b]; break;
      case Op::Pow:
        if (in.int_power) {
          s[i] = ipow(s[in.a], in.power);
        } else {
          double base = real_part(s[in.a]);
          if (!(base > 0.0)) raise_guard(in.guard, base);
          s[i] = detail::pow_general(s[in.a], s[in.b]);
        }
        break;
      case Op::Call: {
        const T& a = s[in.a];
        if (in.guard >= 0) {
          double arg = real_part(a);
          if (!(arg > 0.0)) raise_guard(in.guard, arg);
        }
        switch (in.fn) {
          case Intrinsic::Sin: s[i] = sin(a); break;
          case Intrinsic::Cos: s[i] = cos(a); break;
          case Intrinsic::Exp: s[i] = exp(a); break;
          case Intrinsic::Ln: s[i] = log(a); break;
          case Intrinsic::Sqrt: s[i] = sqrt(a); break;
          case Intrinsic::Tanh: s[i] = tanh(a); break;
          case Intrinsic::Abs: s[i] = abs(a); break;
        }
        break;
      }
    }
  }
  return code.empty() ? T(0.0) : s.back();
}

}  // namespace hj
