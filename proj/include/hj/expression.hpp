#pragma once

#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hj {

enum class Op { Number, Variable, Negate, Add, Sub, Mul, Div, Pow, Call };
enum class Intrinsic { Sin, Cos, Exp, Ln, Sqrt, Tanh, Abs };

std::string_view intrinsic_name(Intrinsic fn);

/// Immutable expression tree. Nodes are shared, so copying is cheap and
/// symbolic derivatives reuse the sub-trees of their operands.
class Expression {
 public:
  struct Node;

  Expression() = default;  // the literal 0

  static Expression number(double value);
  static Expression variable(std::string name);
  static Expression negate(Expression a);
  static Expression binary(Op op, Expression lhs, Expression rhs);
  static Expression call(Intrinsic fn, Expression arg);

  Op op() const;
  double number_value() const;
  const std::string& variable_name() const;
  Intrinsic intrinsic() const;
  const Expression& lhs() const;  // binary ops; also the operand of Negate/Call
  const Expression& rhs() const;

  bool is_number() const { return op() == Op::Number; }
  bool is_number(double value) const { return is_number() && number_value() == value; }

  /// Identity of the underlying node; used to share work across a DAG.
  const void* id() const { return node_.get(); }
  bool empty() const { return !node_; }

 private:
  explicit Expression(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;
};

struct Expression::Node {
  Op op = Op::Number;
  double value = 0.0;
  std::string name;
  Intrinsic fn = Intrinsic::Sin;
  Expression a;
  Expression b;
};

/// Alternative spellings accepted by the parser (e.g. "yt" -> "y1_1").
using AliasMap = std::map<std::string, std::string, std::less<>>;

/// Parse text against the declared variable names. Free identifiers must be
/// declared variables, aliases, or intrinsic function names (when called).
Expression parse(std::string_view text, std::span<const std::string> vars,
                 const AliasMap& aliases = {});

/// Canonical fully-parenthesised form; parse(print(e)) reproduces e.
std::string print(const Expression& e);

bool structurally_equal(const Expression& a, const Expression& b);

std::set<std::string> free_variables(const Expression& e);

// Builders with constant folding and the neutral-element rules
// (x+0, x*1, x*0, x^1, x^0, -(-x)). No other rewriting is done.
Expression operator+(const Expression& a, const Expression& b);
Expression operator-(const Expression& a, const Expression& b);
Expression operator*(const Expression& a, const Expression& b);
Expression operator/(const Expression& a, const Expression& b);
Expression operator-(const Expression& a);
Expression pow(const Expression& base, const Expression& exponent);
Expression apply(Intrinsic fn, const Expression& arg);

/// Symbolic partial derivative with respect to a named variable.
Expression diff(const Expression& e, std::string_view var);

/// Replace variables by expressions (names not in the map are kept).
Expression substitute(const Expression& e, const std::map<std::string, Expression, std::less<>>& repl);

/// Rebuild through the folding builders (collapses constant sub-trees).
Expression fold_constants(const Expression& e);

}  // namespace hj
