#include "hj/expression.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <unordered_map>

#include "hj/errors.hpp"

namespace hj {

namespace {

constexpr std::array<std::pair<std::string_view, Intrinsic>, 7> kIntrinsics{{
    {"sin", Intrinsic::Sin},
    {"cos", Intrinsic::Cos},
    {"exp", Intrinsic::Exp},
    {"ln", Intrinsic::Ln},
    {"sqrt", Intrinsic::Sqrt},
    {"tanh", Intrinsic::Tanh},
    {"abs", Intrinsic::Abs},
}};

std::optional<Intrinsic> lookup_intrinsic(std::string_view name) {
  for (const auto& [n, fn] : kIntrinsics)
    if (n == name) return fn;
  return std::nullopt;
}

const Expression kZero;

}  // namespace

std::string_view intrinsic_name(Intrinsic fn) {
  for (const auto& [n, f] : kIntrinsics)
    if (f == fn) return n;
  return "?";
}

// ---------------------------------------------------------------------------
// Node access

Expression Expression::number(double value) {
  auto n = std::make_shared<Node>();
  n->op = Op::Number;
  n->value = value;
  return Expression(std::move(n));
}

Expression Expression::variable(std::string name) {
  auto n = std::make_shared<Node>();
  n->op = Op::Variable;
  n->name = std::move(name);
  return Expression(std::move(n));
}

Expression Expression::negate(Expression a) {
  auto n = std::make_shared<Node>();
  n->op = Op::Negate;
  n->a = std::move(a);
  return Expression(std::move(n));
}

Expression Expression::binary(Op op, Expression lhs, Expression rhs) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->a = std::move(lhs);
  n->b = std::move(rhs);
  return Expression(std::move(n));
}

Expression Expression::call(Intrinsic fn, Expression arg) {
  auto n = std::make_shared<Node>();
  n->op = Op::Call;
  n->fn = fn;
  n->a = std::move(arg);
  return Expression(std::move(n));
}

Op Expression::op() const { return node_ ? node_->op : Op::Number; }
double Expression::number_value() const { return node_ ? node_->value : 0.0; }
const std::string& Expression::variable_name() const {
  static const std::string empty;
  return node_ ? node_->name : empty;
}
Intrinsic Expression::intrinsic() const { return node_ ? node_->fn : Intrinsic::Sin; }
const Expression& Expression::lhs() const { return node_ ? node_->a : kZero; }
const Expression& Expression::rhs() const { return node_ ? node_->b : kZero; }

// ---------------------------------------------------------------------------
// Parser

namespace {

enum class Tok { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, End };

struct Token {
  Tok kind;
  std::size_t offset;
  std::string text;
  double number = 0.0;
};

std::string describe(const Token& t) {
  return t.kind == Tok::End ? std::string("end of input") : "'" + t.text + "'";
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    const std::size_t start = pos_;
    if (pos_ >= src_.size()) return {Tok::End, start, ""};
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) ||
        (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
      return lex_number(start);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        ++pos_;
      return {Tok::Ident, start, std::string(src_.substr(start, pos_ - start))};
    }
    ++pos_;
    switch (c) {
      case '+': return {Tok::Plus, start, "+"};
      case '-': return {Tok::Minus, start, "-"};
      case '*': return {Tok::Star, start, "*"};
      case '/': return {Tok::Slash, start, "/"};
      case '^': return {Tok::Caret, start, "^"};
      case '(': return {Tok::LParen, start, "("};
      case ')': return {Tok::RParen, start, ")"};
      default:
        throw SyntaxError(start, {"number", "identifier", "(", "-"}, std::string("'") + c + "'");
    }
  }

 private:
  Token lex_number(std::size_t start) {
    auto digits = [&] {
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    };
    digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      digits();
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
        digits();
      else
        pos_ = save;  // "2e" is the number 2 followed by identifier e
    }
    std::string text(src_.substr(start, pos_ - start));
    return {Tok::Number, start, text, std::strtod(text.c_str(), nullptr)};
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

class Parser {
 public:
  Parser(std::string_view src, std::span<const std::string> vars, const AliasMap& aliases)
      : lex_(src), vars_(vars), aliases_(aliases) {
    advance();
  }

  Expression parse_all() {
    Expression e = expr();
    if (cur_.kind != Tok::End)
      throw SyntaxError(cur_.offset, {"+", "-", "*", "/", "^", "end of input"}, describe(cur_));
    return e;
  }

 private:
  void advance() { cur_ = lex_.next(); }

  Expression expr() {
    Expression e = term();
    while (cur_.kind == Tok::Plus || cur_.kind == Tok::Minus) {
      Op op = cur_.kind == Tok::Plus ? Op::Add : Op::Sub;
      advance();
      e = Expression::binary(op, e, term());
    }
    return e;
  }

  Expression term() {
    Expression e = factor();
    while (cur_.kind == Tok::Star || cur_.kind == Tok::Slash) {
      Op op = cur_.kind == Tok::Star ? Op::Mul : Op::Div;
      advance();
      e = Expression::binary(op, e, factor());
    }
    return e;
  }

  // Right associative: a^b^c = a^(b^c).
  Expression factor() {
    Expression base = unary();
    if (cur_.kind == Tok::Caret) {
      advance();
      return Expression::binary(Op::Pow, base, factor());
    }
    return base;
  }

  Expression unary() {
    if (cur_.kind == Tok::Minus) {
      advance();
      Expression operand = unary();
      // Negative literals are folded so that printed "(-3)" reparses to the same tree.
      if (operand.is_number()) return Expression::number(-operand.number_value());
      return Expression::negate(operand);
    }
    return atom();
  }

  Expression atom() {
    switch (cur_.kind) {
      case Tok::Number: {
        double v = cur_.number;
        advance();
        return Expression::number(v);
      }
      case Tok::Ident: {
        Token id = cur_;
        advance();
        if (cur_.kind == Tok::LParen) {
          auto fn = lookup_intrinsic(id.text);
          if (!fn) throw UnknownIdentifier(id.text);
          advance();
          Expression arg = expr();
          expect(Tok::RParen, ")");
          return Expression::call(*fn, arg);
        }
        return Expression::variable(resolve(id.text));
      }
      case Tok::LParen: {
        advance();
        Expression e = expr();
        expect(Tok::RParen, ")");
        return e;
      }
      default:
        throw SyntaxError(cur_.offset, {"number", "identifier", "(", "-"}, describe(cur_));
    }
  }

  void expect(Tok kind, const char* text) {
    if (cur_.kind != kind) throw SyntaxError(cur_.offset, {text}, describe(cur_));
    advance();
  }

  std::string resolve(const std::string& name) const {
    if (std::find(vars_.begin(), vars_.end(), name) != vars_.end()) return name;
    if (auto it = aliases_.find(name); it != aliases_.end()) return it->second;
    throw UnknownIdentifier(name);
  }

  Lexer lex_;
  std::span<const std::string> vars_;
  const AliasMap& aliases_;
  Token cur_{Tok::End, 0, ""};
};

}  // namespace

Expression parse(std::string_view text, std::span<const std::string> vars, const AliasMap& aliases) {
  return Parser(text, vars, aliases).parse_all();
}

// ---------------------------------------------------------------------------
// Printing and comparison

namespace {

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s(buf);
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec < 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) {
      s = buf;
      break;
    }
  }
  if (v < 0 || s.front() == '-') return "(" + s + ")";
  return s;
}

char op_char(Op op) {
  switch (op) {
    case Op::Add: return '+';
    case Op::Sub: return '-';
    case Op::Mul: return '*';
    case Op::Div: return '/';
    case Op::Pow: return '^';
    default: return '?';
  }
}

void print_into(const Expression& e, std::string& out) {
  switch (e.op()) {
    case Op::Number: out += format_number(e.number_value()); return;
    case Op::Variable: out += e.variable_name(); return;
    case Op::Negate:
      out += "(-";
      print_into(e.lhs(), out);
      out += ")";
      return;
    case Op::Call:
      out += intrinsic_name(e.intrinsic());
      out += "(";
      print_into(e.lhs(), out);
      out += ")";
      return;
    default:
      out += "(";
      print_into(e.lhs(), out);
      out += ' ';
      out += op_char(e.op());
      out += ' ';
      print_into(e.rhs(), out);
      out += ")";
  }
}

}  // namespace

std::string print(const Expression& e) {
  std::string out;
  print_into(e, out);
  return out;
}

bool structurally_equal(const Expression& a, const Expression& b) {
  if (a.id() == b.id()) return true;
  if (a.op() != b.op()) return false;
  switch (a.op()) {
    case Op::Number: return a.number_value() == b.number_value();
    case Op::Variable: return a.variable_name() == b.variable_name();
    case Op::Negate: return structurally_equal(a.lhs(), b.lhs());
    case Op::Call: return a.intrinsic() == b.intrinsic() && structurally_equal(a.lhs(), b.lhs());
    default: return structurally_equal(a.lhs(), b.lhs()) && structurally_equal(a.rhs(), b.rhs());
  }
}

namespace {
void collect(const Expression& e, std::set<std::string>& out) {
  switch (e.op()) {
    case Op::Number: return;
    case Op::Variable: out.insert(e.variable_name()); return;
    case Op::Negate:
    case Op::Call: collect(e.lhs(), out); return;
    default:
      collect(e.lhs(), out);
      collect(e.rhs(), out);
  }
}
}  // namespace

std::set<std::string> free_variables(const Expression& e) {
  std::set<std::string> out;
  collect(e, out);
  return out;
}

// ---------------------------------------------------------------------------
// Folding builders

Expression operator+(const Expression& a, const Expression& b) {
  if (a.is_number() && b.is_number()) return Expression::number(a.number_value() + b.number_value());
  if (a.is_number(0.0)) return b;
  if (b.is_number(0.0)) return a;
  return Expression::binary(Op::Add, a, b);
}

Expression operator-(const Expression& a, const Expression& b) {
  if (a.is_number() && b.is_number()) return Expression::number(a.number_value() - b.number_value());
  if (b.is_number(0.0)) return a;
  if (a.is_number(0.0)) return -b;
  return Expression::binary(Op::Sub, a, b);
}

Expression operator*(const Expression& a, const Expression& b) {
  if (a.is_number() && b.is_number()) return Expression::number(a.number_value() * b.number_value());
  if (a.is_number(0.0) || b.is_number(0.0)) return Expression::number(0.0);
  if (a.is_number(1.0)) return b;
  if (b.is_number(1.0)) return a;
  if (a.is_number(-1.0)) return -b;
  if (b.is_number(-1.0)) return -a;
  return Expression::binary(Op::Mul, a, b);
}

Expression operator/(const Expression& a, const Expression& b) {
  if (a.is_number() && b.is_number() && b.number_value() != 0.0)
    return Expression::number(a.number_value() / b.number_value());
  if (a.is_number(0.0)) return Expression::number(0.0);
  if (b.is_number(1.0)) return a;
  return Expression::binary(Op::Div, a, b);
}

Expression operator-(const Expression& a) {
  if (a.is_number()) return Expression::number(-a.number_value());
  if (a.op() == Op::Negate) return a.lhs();
  return Expression::negate(a);
}

Expression pow(const Expression& base, const Expression& exponent) {
  if (exponent.is_number(0.0)) return Expression::number(1.0);
  if (exponent.is_number(1.0)) return base;
  if (base.is_number() && exponent.is_number()) {
    double e = exponent.number_value();
    double b = base.number_value();
    if (b > 0.0 || e == std::floor(e)) return Expression::number(std::pow(b, e));
  }
  return Expression::binary(Op::Pow, base, exponent);
}

Expression apply(Intrinsic fn, const Expression& arg) {
  if (arg.is_number()) {
    double x = arg.number_value();
    switch (fn) {
      case Intrinsic::Sin: return Expression::number(std::sin(x));
      case Intrinsic::Cos: return Expression::number(std::cos(x));
      case Intrinsic::Exp: return Expression::number(std::exp(x));
      case Intrinsic::Tanh: return Expression::number(std::tanh(x));
      case Intrinsic::Abs: return Expression::number(std::abs(x));
      case Intrinsic::Ln:
        if (x > 0.0) return Expression::number(std::log(x));
        break;
      case Intrinsic::Sqrt:
        if (x > 0.0) return Expression::number(std::sqrt(x));
        break;
    }
  }
  return Expression::call(fn, arg);
}

// ---------------------------------------------------------------------------
// Symbolic differentiation

namespace {

class Differentiator {
 public:
  explicit Differentiator(std::string_view var) : var_(var) {}

  Expression operator()(const Expression& e) {
    if (auto it = memo_.find(e.id()); it != memo_.end() && e.id() != nullptr) return it->second;
    Expression d = compute(e);
    if (e.id() != nullptr) memo_.emplace(e.id(), d);
    return d;
  }

 private:
  Expression compute(const Expression& e) {
    using E = Expression;
    switch (e.op()) {
      case Op::Number: return E::number(0.0);
      case Op::Variable: return E::number(e.variable_name() == var_ ? 1.0 : 0.0);
      case Op::Negate: return -(*this)(e.lhs());
      case Op::Add: return (*this)(e.lhs()) + (*this)(e.rhs());
      case Op::Sub: return (*this)(e.lhs()) - (*this)(e.rhs());
      case Op::Mul: {
        const E& a = e.lhs();
        const E& b = e.rhs();
        return (*this)(a) * b + a * (*this)(b);
      }
      case Op::Div: {
        const E& a = e.lhs();
        const E& b = e.rhs();
        E da = (*this)(a);
        E db = (*this)(b);
        if (db.is_number(0.0)) return da / b;
        return (da * b - a * db) / pow(b, E::number(2.0));
      }
      case Op::Pow: {
        const E& a = e.lhs();
        const E& b = e.rhs();
        E da = (*this)(a);
        E db = (*this)(b);
        if (db.is_number(0.0)) {
          if (da.is_number(0.0)) return E::number(0.0);
          E c = b;
          return c * pow(a, c - E::number(1.0)) * da;
        }
        // d(a^b) = a^b (b' ln a + b a'/a)
        return e * (db * apply(Intrinsic::Ln, a) + b * da / a);
      }
      case Op::Call: {
        const E& a = e.lhs();
        E da = (*this)(a);
        if (da.is_number(0.0)) return E::number(0.0);
        switch (e.intrinsic()) {
          case Intrinsic::Sin: return apply(Intrinsic::Cos, a) * da;
          case Intrinsic::Cos: return -(apply(Intrinsic::Sin, a) * da);
          case Intrinsic::Exp: return e * da;
          case Intrinsic::Ln: return da / a;
          case Intrinsic::Sqrt: return da / (E::number(2.0) * e);
          case Intrinsic::Tanh: return (E::number(1.0) - pow(e, E::number(2.0))) * da;
          case Intrinsic::Abs: return (a / e) * da;
        }
      }
    }
    return E::number(0.0);
  }

  std::string_view var_;
  std::unordered_map<const void*, Expression> memo_;
};

class Rebuilder {
 public:
  explicit Rebuilder(const std::map<std::string, Expression, std::less<>>* repl) : repl_(repl) {}

  Expression operator()(const Expression& e) {
    if (e.id() == nullptr) return e;
    if (auto it = memo_.find(e.id()); it != memo_.end()) return it->second;
    Expression r = compute(e);
    memo_.emplace(e.id(), r);
    return r;
  }

 private:
  Expression compute(const Expression& e) {
    switch (e.op()) {
      case Op::Number: return e;
      case Op::Variable: {
        if (repl_) {
          if (auto it = repl_->find(e.variable_name()); it != repl_->end()) return it->second;
        }
        return e;
      }
      case Op::Negate: return -(*this)(e.lhs());
      case Op::Call: return apply(e.intrinsic(), (*this)(e.lhs()));
      case Op::Add: return (*this)(e.lhs()) + (*this)(e.rhs());
      case Op::Sub: return (*this)(e.lhs()) - (*this)(e.rhs());
      case Op::Mul: return (*this)(e.lhs()) * (*this)(e.rhs());
      case Op::Div: return (*this)(e.lhs()) / (*this)(e.rhs());
      case Op::Pow: return pow((*this)(e.lhs()), (*this)(e.rhs()));
    }
    return e;
  }

  const std::map<std::string, Expression, std::less<>>* repl_;
  std::unordered_map<const void*, Expression> memo_;
};

}  // namespace

Expression diff(const Expression& e, std::string_view var) { return Differentiator(var)(e); }

Expression substitute(const Expression& e, const std::map<std::string, Expression, std::less<>>& repl) {
  return Rebuilder(&repl)(e);
}

Expression fold_constants(const Expression& e) { return Rebuilder(nullptr)(e); }

}  // namespace hj
