#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace hj {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t offset, std::vector<std::string> expected, const std::string& found);

  std::size_t offset() const noexcept { return offset_; }
  const std::vector<std::string>& expected() const noexcept { return expected_; }

 private:
  std::size_t offset_;
  std::vector<std::string> expected_;
};

class UnknownIdentifier : public Error {
 public:
  explicit UnknownIdentifier(std::string name);
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

/// A guarded sub-expression (sqrt/ln argument, non-integer power base) was
/// not strictly positive at the evaluation point.
class DomainViolation : public Error {
 public:
  DomainViolation(std::size_t guard_index, double guard_value, std::string guard_text = {});

  std::size_t guard_index() const noexcept { return guard_index_; }
  double guard_value() const noexcept { return guard_value_; }
  const std::string& guard_text() const noexcept { return guard_text_; }

  /// Set by integrators when the violation happened mid-trajectory.
  double time = 0.0;
  bool has_time = false;

 private:
  std::size_t guard_index_;
  double guard_value_;
  std::string guard_text_;
};

class NewtonDivergence : public Error {
 public:
  NewtonDivergence(int iterations, double residual, std::string context = {});
  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  int iterations_;
  double residual_;
};

class SingularFamily : public Error {
 public:
  SingularFamily(std::size_t node, double abs_det);
  std::size_t node() const noexcept { return node_; }
  double abs_det() const noexcept { return abs_det_; }

 private:
  std::size_t node_;
  double abs_det_;
};

class SingularLegendre : public Error {
 public:
  explicit SingularLegendre(double condition);
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

class DegenerateGenerator : public Error {
 public:
  explicit DegenerateGenerator(double condition);
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

class UnsupportedOrder : public Error {
 public:
  explicit UnsupportedOrder(int order);
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace hj
