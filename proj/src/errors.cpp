#include "hj/errors.hpp"

#include <sstream>

namespace hj {

namespace {
std::string syntax_message(std::size_t offset, const std::vector<std::string>& expected, const std::string& found) {
  std::ostringstream os;
  os << "syntax error at offset " << offset << ": expected ";
  for (std::size_t i = 0; i < expected.size(); ++i) os << (i ? ", " : "") << expected[i];
  os << "; found " << found;
  return os.str();
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}
}  // namespace

SyntaxError::SyntaxError(std::size_t offset, std::vector<std::string> expected, const std::string& found)
    : Error(syntax_message(offset, expected, found)), offset_(offset), expected_(std::move(expected)) {}

UnknownIdentifier::UnknownIdentifier(std::string name)
    : Error("unknown identifier '" + name + "'"), name_(std::move(name)) {}

DomainViolation::DomainViolation(std::size_t guard_index, double guard_value, std::string guard_text)
    : Error("domain violation: guard #" + std::to_string(guard_index) +
            (guard_text.empty() ? std::string() : " (" + guard_text + ")") + " = " + num(guard_value) +
            " is not strictly positive"),
      guard_index_(guard_index),
      guard_value_(guard_value),
      guard_text_(std::move(guard_text)) {}

NewtonDivergence::NewtonDivergence(int iterations, double residual, std::string context)
    : Error("Newton iteration did not converge after " + std::to_string(iterations) +
            " iterations (residual " + num(residual) + ")" + (context.empty() ? "" : ": " + context)),
      iterations_(iterations),
      residual_(residual) {}

SingularFamily::SingularFamily(std::size_t node, double abs_det)
    : Error("family Jacobian is singular at grid node " + std::to_string(node) + " (|det| = " + num(abs_det) + ")"),
      node_(node),
      abs_det_(abs_det) {}

SingularLegendre::SingularLegendre(double condition)
    : Error("Legendre map is singular (fiber Hessian condition " + num(condition) + ")"), condition_(condition) {}

DegenerateGenerator::DegenerateGenerator(double condition)
    : Error("generating function is degenerate (mixed Hessian condition " + num(condition) + ")"),
      condition_(condition) {}

UnsupportedOrder::UnsupportedOrder(int order)
    : Error("unsupported order k = " + std::to_string(order) + " (supported: 1, 2, 3)") {}

}  // namespace hj
