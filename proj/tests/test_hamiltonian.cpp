#include <doctest.h>

#include <cmath>

#include "hj/hamiltonian.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace hj;
using hj::test::vec;

namespace {

ParamFamily family1(const std::string& alpha) {
  std::vector<std::string> v{"q1", "l"};
  return ParamFamily({"q1"}, {"l"}, {ScalarField::compile(alpha, v)});
}

// i(X) d(alpha) + d(alpha^* H) from finite differences of alpha and of H o alpha.
Vector residual_oracle(const HamiltonianSystem& sys, const OneFormSection& alpha, const Vector& x_at_q,
                       const Vector& q) {
  const Eigen::Index n = q.size();
  Matrix j = oracle::fd_jacobian([&](const Vector& y) { return alpha(y); }, q);
  Vector r(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += x_at_q[i] * (j(k, i) - j(i, k));
    r[k] = s;
  }
  auto pulled = [&](const Vector& y) {
    Vector z(2 * n);
    z << y, alpha(y);
    return sys.hamiltonian()(z);
  };
  return r + oracle::fd_gradient(pulled, q);
}

}  // namespace

TEST_CASE("hamiltonian vector fields") {
  auto free = hamiltonian_vector_field(HamiltonianSystem::parse(1, "p1^2/2"));
  CHECK(free(vec({0.3, 2})) == vec({2, 0}));
  CHECK(free.canonical());

  auto osc = hamiltonian_vector_field(HamiltonianSystem::parse(1, "(p1^2+q1^2)/2"));
  CHECK(osc(vec({0.3, 2})) == vec({2, -0.3}));

  auto coupled = hamiltonian_vector_field(HamiltonianSystem::parse(2, "p1*p2 + q1^2"));
  Vector x = vec({0.5, -1, 2, 3});
  CHECK(coupled(x) == vec({3, 2, -1, 0}));
  Matrix jfd = oracle::fd_jacobian([&](const Vector& y) { return coupled(y); }, x);
  CHECK((coupled.jacobian(x) - jfd).lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("systems reject the wrong arity") {
  CHECK_THROWS_AS(HamiltonianSystem::parse(2, "p1^2 + p3"), UnknownIdentifier);
  CHECK_THROWS_AS(HamiltonianSystem(1, ScalarField::compile("q1", {"q1"})), DimensionMismatch);
  CHECK_THROWS_AS(OneFormSection::parse(2, {"q1"}), DimensionMismatch);
}

TEST_CASE("associated vector fields") {
  auto free = HamiltonianSystem::parse(1, "p1^2/2");
  auto x = associated_vector_field(free, OneFormSection::parse(1, {"1.75"}));
  CHECK(x(vec({-4}))[0] == 1.75);

  auto osc = HamiltonianSystem::parse(1, "(p1^2+q1^2)/2");
  auto xo = associated_vector_field(osc, OneFormSection::parse(1, {"sqrt(2*1.2 - q1^2)"}));
  CHECK(xo(vec({0.4}))[0] == doctest::Approx(std::sqrt(2.4 - 0.16)).epsilon(1e-15));

  auto coupled = HamiltonianSystem::parse(2, "p1^2/2 + p2^2/2 + q1*q2");
  GeneratingScalar s(ScalarField::compile("q1*q2", configuration_vars(2)));
  auto xc = associated_vector_field(coupled, s.differential());
  CHECK(xc(vec({0.7, -1.1})) == vec({-1.1, 0.7}));
  Matrix jfd = oracle::fd_jacobian([&](const Vector& q) { return xc(q); }, vec({0.7, -1.1}));
  CHECK((xc.jacobian(vec({0.7, -1.1})) - jfd).lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("generalized residual vanishes for closed forms on an energy level") {
  auto osc = HamiltonianSystem::parse(1, "(p1^2+q1^2)/2");
  auto alpha = OneFormSection::parse(1, {"sqrt(2 - q1^2)"});
  ResidualReport r = generalized_hj_residual(osc, alpha, linspace_points(-1.3, 1.3, 51));
  CHECK(r.max_norm <= 1e-12);
  CHECK(r.passed());
}

TEST_CASE("generalized residual of alpha = q^2 for the free particle") {
  auto free = HamiltonianSystem::parse(1, "p1^2/2");
  auto alpha = OneFormSection::parse(1, {"q1^2"});
  ResidualReport r = generalized_hj_residual(free, alpha, linspace_points(0, 1, 21));
  CHECK(std::abs(r.max_norm - 2.0) <= 1e-9);
  CHECK((*r.argmax_sample)[0] == 1.0);
  CHECK_FALSE(r.passed());
}

TEST_CASE("generalized residual in two dimensions matches the finite-difference oracle") {
  auto sys = HamiltonianSystem::parse(2, "p1");
  auto alpha = OneFormSection::parse(2, {"q2", "0"});
  std::vector<Vector> samples = Grid{vec({-1, -1}), vec({1, 1}), {5, 5}}.points();
  ResidualReport r = generalized_hj_residual(sys, alpha, samples);
  // X = (1, 0); the curl term (0, -1) cancels the gradient of H o alpha = q2.
  CHECK(r.max_norm <= 1e-9);

  auto general = HamiltonianSystem::parse(2, "p1^2/2 + p1*p2*q1 + sin(q2)*p2 + q1^2*q2");
  auto beta = OneFormSection::parse(2, {"q1*q2^2 + 1", "cos(q1) - q2"});
  auto x = associated_vector_field(general, beta);
  ResidualReport rg = generalized_hj_residual(general, beta, samples);
  double oracle_max = 0.0;
  for (const Vector& q : samples) {
    Vector ro = residual_oracle(general, beta, x(q), q);
    oracle_max = std::max(oracle_max, ro.lpNorm<Eigen::Infinity>());
  }
  CHECK(rg.max_norm == doctest::Approx(oracle_max).epsilon(1e-7));
  CHECK(rg.max_norm > 0.1);
}

TEST_CASE("standard residual: oscillator energy level") {
  auto osc = HamiltonianSystem::parse(1, "(p1^2+q1^2)/2");
  auto alpha = OneFormSection::parse(1, {"sqrt(2*1 - q1^2)"});
  StandardHJReport r = standard_hj_residual(osc, alpha, linspace_points(-0.9, 0.9, 37));
  CHECK(r.closedness.max_norm <= 1e-9);
  CHECK(r.dh.max_norm <= 1e-9);
  CHECK(r.status() == Status::Pass);
}

TEST_CASE("standard residual: closed form on a non-constant level") {
  auto sys = HamiltonianSystem::parse(2, "p1*p2");
  auto alpha = OneFormSection::parse(2, {"q2", "q1"});
  std::vector<Vector> samples = Grid{vec({-1, -1}), vec({1, 1}), {5, 5}}.points();
  StandardHJReport r = standard_hj_residual(sys, alpha, samples);
  CHECK(r.closedness.max_norm == 0.0);
  double oracle = 0.0;
  for (const Vector& q : samples) oracle = std::max(oracle, std::hypot(q[1], q[0]));
  CHECK(r.dh.max_norm == doctest::Approx(oracle).epsilon(1e-14));
  CHECK(r.status() == Status::Fail);
}

TEST_CASE("standard residual: p-independent Hamiltonian") {
  auto sys = HamiltonianSystem::parse(1, "q1^2");
  GeneratingScalar s(ScalarField::compile("sin(q1) + q1^3", {"q1"}));
  StandardHJReport r = standard_hj_residual(sys, s.differential(), linspace_points(-1, 1, 21));
  CHECK(r.dh.max_norm == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("invariance defect") {
  auto free = HamiltonianSystem::parse(1, "p1^2/2");
  ResidualReport a = invariance_defect(free, OneFormSection::parse(1, {"0.8"}), linspace_points(-1, 1, 5), 2.0);
  CHECK(a.max_norm <= 1e-12);

  auto osc = HamiltonianSystem::parse(1, "(p1^2+q1^2)/2");
  ResidualReport b = invariance_defect(osc, OneFormSection::parse(1, {"sqrt(2 - q1^2)"}), {vec({0.5})}, 1.0);
  CHECK(b.max_norm <= 1e-6);

  ResidualReport c = invariance_defect(osc, OneFormSection::parse(1, {"1"}), {vec({0})}, 1.0);
  CHECK(c.max_norm >= 0.4);
  CHECK(c.max_norm == doctest::Approx(1 - std::cos(1.0)).epsilon(1e-6));
}

TEST_CASE("reconstruct: free particle") {
  auto free = HamiltonianSystem::parse(1, "p1^2/2");
  ReconstructResult r = reconstruct(free, OneFormSection::parse(1, {"1"}), vec({0}), 2.0);
  CHECK(r.max_gap <= 1e-10);
  CHECK_FALSE(r.partial);
  CHECK((r.lifted_curve.back() - vec({2, 1})).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("reconstruct: oscillator on the chart") {
  auto osc = HamiltonianSystem::parse(1, "(p1^2+q1^2)/2");
  ReconstructResult r = reconstruct(osc, OneFormSection::parse(1, {"sqrt(2*1 - q1^2)"}), vec({0.3}), 0.8);
  CHECK(r.max_gap <= 1e-6);
  CHECK_FALSE(r.partial);
  // Exact orbit on the level H = 1 through (0.3, sqrt(1.91)).
  const double amp = std::sqrt(2.0), phase = std::asin(0.3 / amp);
  CHECK(r.base_curve.final_state()[0] == doctest::Approx(amp * std::sin(0.8 + phase)).epsilon(1e-9));
}

TEST_CASE("reconstruct: uniform gravity follows the exact parabola") {
  auto grav = HamiltonianSystem::parse(1, "p1^2/2 + q1");
  ReconstructResult r = reconstruct(grav, OneFormSection::parse(1, {"sqrt(2*(2 - q1))"}), vec({0}), 0.5);
  CHECK(r.max_gap <= 1e-6);
  for (std::size_t k = 0; k < r.base_curve.times.size(); k += 50) {
    const double t = r.base_curve.times[k];
    CHECK(std::abs(r.base_curve.states[k][0] - (t * std::sqrt(4.0) - t * t / 2)) <= 1e-9);
  }
}

TEST_CASE("reconstruct stops at the edge of the chart") {
  auto osc = HamiltonianSystem::parse(1, "(p1^2+q1^2)/2");
  ReconstructResult r = reconstruct(osc, OneFormSection::parse(1, {"sqrt(2 - q1^2)"}), vec({0.3}), 4.0);
  CHECK(r.partial);
  CHECK(r.t_reached < 4.0);
  CHECK_FALSE(r.note.empty());
}

TEST_CASE("complete solutions: constants of motion") {
  CompleteSolutionOptions opts;
  SUBCASE("free particle") {
    auto free = HamiltonianSystem::parse(1, "p1^2/2");
    auto nodes = Grid{vec({-1, -2}), vec({1, 2}), {3, 5}}.points();
    CompleteSolutionReport r = complete_solution_check(free, family1("l"), nodes, opts);
    CHECK(r.constants_drift.max_norm <= 1e-12);
    CHECK(r.min_abs_det == 1.0);
    CHECK(r.status() == Status::Pass);
  }
  SUBCASE("oscillator over T = 10 with the midpoint rule") {
    auto osc = HamiltonianSystem::parse(1, "(p1^2+q1^2)/2");
    opts.t_end = 10.0;
    auto nodes = Grid{vec({-0.9, 1}), vec({0.9, 2}), {5, 3}}.points();
    CompleteSolutionReport r = complete_solution_check(osc, family1("sqrt(2*l - q1^2)"), nodes, opts);
    CHECK(r.closedness.max_norm <= 1e-9);
    CHECK(r.dh.max_norm <= 1e-9);
    CHECK(r.constants_drift.max_norm <= 1e-7);
    CHECK(r.status() == Status::Pass);
  }
  SUBCASE("uniform gravity") {
    auto grav = HamiltonianSystem::parse(1, "p1^2/2 + q1");
    auto nodes = Grid{vec({-0.5, 1}), vec({0.5, 2}), {5, 3}}.points();
    CompleteSolutionReport r = complete_solution_check(grav, family1("sqrt(2*(l - q1))"), nodes, opts);
    CHECK(r.constants_drift.max_norm <= 1e-7);
    CHECK(r.status() == Status::Pass);
  }
  SUBCASE("singular family") {
    auto free = HamiltonianSystem::parse(1, "p1^2/2");
    auto nodes = Grid{vec({-1, -1}), vec({1, 1}), {3, 3}}.points();
    CompleteSolutionReport r = complete_solution_check(free, family1("0*l + 1"), nodes, opts);
    CHECK(r.singular_nodes.size() == nodes.size());
    CHECK(r.status() == Status::Fail);
  }
}

TEST_CASE("equivalence chain on the worked systems") {
  struct Case {
    std::string h, alpha;
    double q0, lo, hi;
  };
  for (const Case& c : {Case{"p1^2/2", "1.3", 0.2, -1, 1}, Case{"(p1^2+q1^2)/2", "sqrt(2 - q1^2)", 0.5, -1.2, 1.2},
                        Case{"p1^2/2 + q1", "sqrt(2*(2 - q1))", 0.0, -1, 1.5}}) {
    INFO(c.h);
    auto sys = HamiltonianSystem::parse(1, c.h);
    auto alpha = OneFormSection::parse(1, {c.alpha});
    CHECK(generalized_hj_residual(sys, alpha, linspace_points(c.lo, c.hi, 41)).max_norm <= 1e-9);

    TrajectoryOptions coarse{0.1}, fine{0.05};
    double d1 = invariance_defect(sys, alpha, {vec({c.q0})}, 1.0, 1e-6, coarse).max_norm;
    double d2 = invariance_defect(sys, alpha, {vec({c.q0})}, 1.0, 1e-6, fine).max_norm;
    CHECK(d2 <= 1e-6);
    // Fourth-order shrinkage: halving dt divides the defect by about 16.
    if (d1 > 1e-13) CHECK(d1 / d2 > 10.0);
    CHECK(reconstruct(sys, alpha, vec({c.q0}), 1.0).max_gap <= 1e-6);
  }
  // A non-solution keeps a finite defect as dt shrinks.
  auto osc = HamiltonianSystem::parse(1, "(p1^2+q1^2)/2");
  auto wrong = OneFormSection::parse(1, {"1"});
  CHECK(generalized_hj_residual(osc, wrong, linspace_points(-1, 1, 11)).max_norm > 0.1);
  CHECK(invariance_defect(osc, wrong, {vec({0})}, 1.0, 1e-6, TrajectoryOptions{1e-3}).max_norm > 0.4);
}

TEST_CASE("pullback of the symplectic form is the closedness defect") {
  std::vector<Vector> samples = random_points(vec({-1, -1, -1}), vec({1, 1, 1}), 30, 5);
  auto sys = HamiltonianSystem::parse(3, "p1^2 + p2^2 + p3^2");
  for (const auto& texts : {std::vector<std::string>{"q1*q2^2", "sin(q1)", "q3*q1"},
                            std::vector<std::string>{"q2", "q1", "0"}}) {
    auto alpha = OneFormSection::parse(3, texts);
    StandardHJReport r = standard_hj_residual(sys, alpha, samples);
    double m = 0.0;
    for (const Vector& q : samples) {
      Matrix w = pullback_symplectic_form(alpha, q);
      CHECK(w == -w.transpose());
      m = std::max(m, max_abs(w));
    }
    CHECK(m == r.closedness.max_norm);
  }
}

TEST_CASE("exact forms are closed to machine precision") {
  GeneratingScalar s(ScalarField::compile("sin(q1*q2) + q3^3*exp(q1) - ln(2 + q2^2)", configuration_vars(3)));
  auto alpha = s.differential();
  for (const Vector& q : random_points(vec({-1, -1, -1}), vec({1, 1, 1}), 50, 11))
    CHECK(max_abs(pullback_symplectic_form(alpha, q)) == 0.0);
}

TEST_CASE("closed solutions have zero generalized residual") {
  auto osc2 = HamiltonianSystem::parse(2, "(p1^2 + q1^2)/2 + (p2^2 + q2^2)/2");
  auto alpha = OneFormSection::parse(2, {"sqrt(2*0.8 - q1^2)", "sqrt(2*1.1 - q2^2)"});
  std::vector<Vector> samples = Grid{vec({-1, -1}), vec({1, 1}), {6, 6}}.points();
  // Each block conserves its own energy, but H o alpha = 1.9 is constant and alpha is closed.
  CHECK(standard_hj_residual(osc2, alpha, samples).status() == Status::Pass);
  CHECK(generalized_hj_residual(osc2, alpha, samples).max_norm <= 1e-9);
}
