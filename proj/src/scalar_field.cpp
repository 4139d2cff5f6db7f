#include "hj/scalar_field.hpp"

#include <algorithm>
#include <unordered_map>

namespace hj {

namespace {

class TapeBuilder {
 public:
  TapeBuilder(const std::vector<std::string>& vars, Tape& tape, std::vector<Expression>& guards)
      : vars_(vars), tape_(tape), guards_(guards) {}

  int emit(const Expression& e) {
    if (e.id() != nullptr) {
      if (auto it = slots_.find(e.id()); it != slots_.end()) return it->second;
    }
    Tape::Instr in{e.op()};
    switch (e.op()) {
      case Op::Number: in.constant = e.number_value(); break;
      case Op::Variable: {
        auto it = std::find(vars_.begin(), vars_.end(), e.variable_name());
        if (it == vars_.end()) throw UnknownIdentifier(e.variable_name());
        in.var = static_cast<int>(it - vars_.begin());
        break;
      }
      case Op::Negate: in.a = emit(e.lhs()); break;
      case Op::Call:
        in.fn = e.intrinsic();
        in.a = emit(e.lhs());
        if (in.fn == Intrinsic::Sqrt || in.fn == Intrinsic::Ln) in.guard = guard_for(in.a, e.lhs());
        break;
      case Op::Pow: {
        in.a = emit(e.lhs());
        in.b = emit(e.rhs());
        const Expression& ex = e.rhs();
        if (ex.is_number() && ex.number_value() == std::floor(ex.number_value()) &&
            std::abs(ex.number_value()) < 1e9) {
          in.int_power = true;
          in.power = static_cast<long>(ex.number_value());
        } else {
          in.guard = guard_for(in.a, e.lhs());
        }
        break;
      }
      default:
        in.a = emit(e.lhs());
        in.b = emit(e.rhs());
    }
    tape_.code.push_back(in);
    int slot = static_cast<int>(tape_.code.size()) - 1;
    if (e.id() != nullptr) slots_.emplace(e.id(), slot);
    return slot;
  }

 private:
  int guard_for(int slot, const Expression& arg) {
    if (auto it = guard_of_slot_.find(slot); it != guard_of_slot_.end()) return it->second;
    int g = static_cast<int>(guards_.size());
    guards_.push_back(arg);
    guard_of_slot_.emplace(slot, g);
    return g;
  }

  const std::vector<std::string>& vars_;
  Tape& tape_;
  std::vector<Expression>& guards_;
  std::unordered_map<const void*, int> slots_;
  std::unordered_map<int, int> guard_of_slot_;
};

}  // namespace

ScalarField ScalarField::compile(std::string_view text, std::vector<std::string> vars,
                                 const AliasMap& aliases) {
  Expression e = parse(text, vars, aliases);
  return from_expression(std::move(e), std::move(vars));
}

ScalarField ScalarField::from_expression(Expression e, std::vector<std::string> vars) {
  ScalarField f;
  f.expr_ = std::move(e);
  f.vars_ = std::make_shared<const std::vector<std::string>>(std::move(vars));
  f.build();
  return f;
}

ScalarField ScalarField::constant(double value, std::vector<std::string> vars) {
  return from_expression(Expression::number(value), std::move(vars));
}

void ScalarField::build() {
  auto tape = std::make_shared<Tape>();
  auto guards = std::make_shared<std::vector<Expression>>();
  TapeBuilder builder(*vars_, *tape, *guards);
  builder.emit(expr_);
  tape->guarded_slot_count = static_cast<int>(guards->size());
  tape_ = std::move(tape);
  guards_ = std::move(guards);
}

void ScalarField::raise_guard(int guard, double value) const {
  std::string text;
  if (guard >= 0 && guard < static_cast<int>(guards_->size())) text = print((*guards_)[guard]);
  throw DomainViolation(static_cast<std::size_t>(std::max(guard, 0)), value, text);
}

double ScalarField::value(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return evaluate<double>(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

Eigen::VectorXd ScalarField::gradient(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::Index n = x.size();
  Eigen::VectorXd g(n);
  std::vector<Dual<double>> xd(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) xd[i] = Dual<double>(x[i], 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    xd[i].d = 1.0;
    g[i] = evaluate<Dual<double>>(xd).d;
    xd[i].d = 0.0;
  }
  return g;
}

Eigen::MatrixXd ScalarField::hessian(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd h(n, n);
  std::vector<HyperDual> xd(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) xd[i] = HyperDual(Dual<double>(x[i], 0.0), Dual<double>(0.0, 0.0));
  for (Eigen::Index i = 0; i < n; ++i) {
    xd[i].d.v = 1.0;
    for (Eigen::Index j = i; j < n; ++j) {
      xd[j].v.d = 1.0;
      double hij = evaluate<HyperDual>(xd).d.d;
      h(i, j) = hij;
      h(j, i) = hij;
      xd[j].v.d = 0.0;
    }
    xd[i].d.v = 0.0;
  }
  return h;
}

void ScalarField::partial_hessian(const Eigen::Ref<const Eigen::VectorXd>& x, std::span<const int> rows,
                                  Eigen::VectorXd& grad, Eigen::MatrixXd& hess_rows) const {
  const Eigen::Index n = x.size();
  grad.resize(n);
  hess_rows.resize(static_cast<Eigen::Index>(rows.size()), n);
  std::vector<HyperDual> xd(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) xd[i] = HyperDual(Dual<double>(x[i], 0.0), Dual<double>(0.0, 0.0));
  if (rows.empty()) {
    grad = gradient(x);
    return;
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int i = rows[r];
    xd[i].d.v = 1.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      xd[j].v.d = 1.0;
      HyperDual out = evaluate<HyperDual>(xd);
      hess_rows(static_cast<Eigen::Index>(r), j) = out.d.d;
      if (r == 0) grad[j] = out.v.d;
      xd[j].v.d = 0.0;
    }
    xd[i].d.v = 0.0;
  }
}

ScalarField ScalarField::partial(std::string_view var) const {
  if (std::find(vars_->begin(), vars_->end(), var) == vars_->end()) throw UnknownIdentifier(std::string(var));
  return from_expression(diff(expr_, var), *vars_);
}

ScalarField ScalarField::over(std::vector<std::string> vars) const {
  return from_expression(expr_, std::move(vars));
}

ScalarField ScalarField::bind(const std::vector<std::string>& names, std::span<const double> values) const {
  if (names.size() != values.size()) throw DimensionMismatch("bind: names and values differ in length");
  std::map<std::string, Expression, std::less<>> repl;
  for (std::size_t i = 0; i < names.size(); ++i) repl.emplace(names[i], Expression::number(values[i]));
  std::vector<std::string> rest;
  for (const auto& v : *vars_)
    if (!repl.count(v)) rest.push_back(v);
  return from_expression(substitute(expr_, repl), std::move(rest));
}

ScalarField ScalarField::rename(const std::map<std::string, std::string, std::less<>>& names) const {
  std::map<std::string, Expression, std::less<>> repl;
  for (const auto& [from, to] : names) repl.emplace(from, Expression::variable(to));
  std::vector<std::string> vars;
  for (const auto& v : *vars_) {
    auto it = names.find(v);
    vars.push_back(it == names.end() ? v : it->second);
  }
  return from_expression(substitute(expr_, repl), std::move(vars));
}

}  // namespace hj
