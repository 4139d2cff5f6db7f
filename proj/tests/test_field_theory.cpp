#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "hj/field_theory.hpp"
#include "hj/lagrangian.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace hj;
using hj::test::vec;

namespace {

const char* kWaveL = "(yt^2 - yx^2)/2";
const char* kWaveH = "(pt^2 - px^2)/2";

std::vector<Vector> xy_grid() { return Grid{vec({-1, -2, -1.5}), vec({1, 2, 1.5}), {4, 5, 6}}.points(); }

FieldState wave_data(const PeriodicGrid& g) {
  return sample_field_data(FieldChart(2, 1), g, {"sin(x)"}, {"0"}, {"-cos(x)"});
}

double dalembert_error(const FieldFlowResult& r, double t) {
  double err = 0.0;
  for (Eigen::Index j = 0; j < r.x.size(); ++j)
    err = std::max(err, std::abs(r.final_state().y(j, 0) - std::sin(r.x[j]) * std::cos(t)));
  return err;
}

}  // namespace

TEST_CASE("field chart coordinates and aliases") {
  FieldChart c(2, 1);
  CHECK(c.lagrangian_vars() == std::vector<std::string>{"x1", "x2", "y1", "y1_1", "y1_2"});
  CHECK(c.hamiltonian_vars() == std::vector<std::string>{"x1", "x2", "y1", "p1_1", "p1_2"});
  FieldChart d(2, 2);
  CHECK(d.velocity_vars() == std::vector<std::string>{"y1_1", "y1_2", "y2_1", "y2_2"});
  CHECK(d.jet_index(1, 0) == 2);
  CHECK_THROWS_AS(FieldChart(3, 1), DimensionMismatch);
  auto t = FieldTheory::parse_lagrangian(2, 1, "t*yt + x*yx + y");
  CHECK(t.lagrangian().value(vec({2, 3, 5, 7, 11})) == 2 * 7 + 3 * 11 + 5);
}

TEST_CASE("field Legendre map of the wave theory") {
  auto wave = FieldTheory::parse_lagrangian(2, 1, kWaveL);
  for (const Vector& z : random_points(Vector::Constant(5, -3), Vector::Constant(5, 3), 50, 1)) {
    Vector p = field_legendre(wave, z);
    CHECK(p[0] == z[3]);
    CHECK(p[1] == -z[4]);
  }
}

TEST_CASE("Hamiltonian of the wave theory from its Lagrangian") {
  auto wave = FieldTheory::parse_lagrangian(2, 1, kWaveL);
  auto h = field_hamiltonian_from_lagrangian(wave).hamiltonian();
  auto exact = FieldTheory::parse_hamiltonian(2, 1, kWaveH).hamiltonian();
  for (const Vector& z : random_points(Vector::Constant(5, -3), Vector::Constant(5, 3), 50, 2)) {
    // Pointwise Legendre oracle: v = (p0, -p1), H = p.v - L.
    const double p0 = z[3], p1 = z[4];
    const double oracle = p0 * p0 + p1 * (-p1) - (p0 * p0 - p1 * p1) / 2;
    CHECK(std::abs(h(z) - oracle) <= 1e-10);
    CHECK(std::abs(h(z) - exact(z)) <= 1e-10);
    CHECK((h.gradient(z) - exact.gradient(z)).lpNorm<Eigen::Infinity>() <= 1e-10);
    CHECK((h.hessian(z) - exact.hessian(z)).lpNorm<Eigen::Infinity>() <= 1e-10);
  }
}

TEST_CASE("degenerate field Lagrangians are rejected") {
  auto t = FieldTheory::parse_lagrangian(2, 1, "yt^2/2 + y*yx");
  CHECK_THROWS_AS(field_legendre(t, vec({0, 0, 1, 1, 1})), SingularLegendre);
  CHECK_THROWS_AS(field_legendre_inverse(t, vec({0, 0, 1, 1, 1})), SingularLegendre);
}

TEST_CASE("field Legendre round trip") {
  SUBCASE("nonlinear scalar field") {
    auto t = FieldTheory::parse_lagrangian(2, 1, "(yt^2 - yx^2)/2 + yt^4/12 + y^2*yx^2/8 - x*yt*yx/10 + sin(y)");
    int checked = 0;
    for (const Vector& z : random_points(Vector::Constant(5, -1), Vector::Constant(5, 1), 100, 3)) {
      Vector p = field_legendre(t, z);
      Vector back = field_legendre_inverse(t, (Vector(5) << z.head(3), p).finished());
      CHECK((back - z).lpNorm<Eigen::Infinity>() <= 1e-10);
      ++checked;
    }
    CHECK(checked == 100);
  }
  SUBCASE("two fields") {
    auto t = FieldTheory::parse_lagrangian(
        2, 2, "(y1_1^2 - y1_2^2 + y2_1^2 - y2_2^2)/2 + y1_1*y2_1/4 + y1*y2*y1_2^2/10 + y1_1^4/20");
    for (const Vector& z : random_points(Vector::Constant(8, -1), Vector::Constant(8, 1), 100, 4)) {
      Vector p = field_legendre(t, z);
      Vector back = field_legendre_inverse(t, (Vector(8) << z.head(4), p).finished());
      CHECK((back - z).lpNorm<Eigen::Infinity>() <= 1e-10);
    }
  }
}

TEST_CASE("Lagrangian field HJ residual") {
  auto wave = FieldTheory::parse_lagrangian(2, 1, kWaveL);
  const FieldChart& c = wave.chart();
  SUBCASE("wave candidates") {
    for (auto [a, b] : {std::pair{1.0, 1.0}, {1.0, -1.0}, {0.5, 2.0}, {-1.5, 0.3}}) {
      std::vector<double> ab{a, b};
      auto cand = FieldHJCandidate::parse(c, {"a*y", "-b*y"}, {"a", "b"}, {"a", "b"}, ab);
      ResidualReport r = lag_field_hj_residual(wave, cand, xy_grid());
      CHECK(std::abs(r.max_norm - std::abs((a * a - b * b) / 2)) <= 1e-12);
    }
  }
  SUBCASE("L = yt^2/2 with the trivial field") {
    auto t = FieldTheory::parse_lagrangian(2, 1, "yt^2/2");
    for (double cv : {0.0, 0.7}) {
      std::vector<double> v{cv};
      auto cand = FieldHJCandidate::parse(c, {"c*y", "0"}, {"c", "0"}, {"c"}, v);
      CHECK(std::abs(lag_field_hj_residual(t, cand, xy_grid()).max_norm - cv * cv / 2) <= 1e-14);
    }
  }
  SUBCASE("constant W leaves only the Lagrangian") {
    auto cand = FieldHJCandidate::parse(c, {"3", "-2"}, {"x", "t*y"});
    ResidualReport r = lag_field_hj_residual(wave, cand, xy_grid());
    for (const Vector& z : xy_grid()) {
      const double yt = z[1], yx = z[0] * z[2];
      CHECK(std::abs(lag_field_hj_residual(wave, cand, {z}).max_norm - std::abs((yt * yt - yx * yx) / 2)) <= 1e-14);
    }
    CHECK(r.n_skipped == 0);
  }
  SUBCASE("the matching jet field of W = (a y, a y)") {
    // dW/dy = (a, a) are momenta; the matching velocities are (a, -a).
    std::vector<double> av{1.3};
    auto good = FieldHJCandidate::parse(c, {"a*y", "a*y"}, {"a", "-a"}, {"a"}, av);
    CHECK(lag_field_hj_residual(wave, good, xy_grid()).max_norm <= 1e-12);
    auto literal = FieldHJCandidate::parse(c, {"a*y", "a*y"}, {"a", "a"}, {"a"}, av);
    CHECK(lag_field_hj_residual(wave, literal, xy_grid()).max_norm == doctest::Approx(2 * 1.3 * 1.3).epsilon(1e-14));
  }
}

TEST_CASE("Hamiltonian field HJ residual") {
  auto wave = FieldTheory::parse_hamiltonian(2, 1, kWaveH);
  const FieldChart& c = wave.chart();
  SUBCASE("W = (a y, a y)") {
    std::vector<double> av{0.8};
    auto cand = FieldHJCandidate::parse(c, {"a*y", "a*y"}, {}, {"a"}, av);
    HamFieldHJReport r = ham_field_hj_residual(wave, cand, xy_grid());
    CHECK(r.residual.max_norm <= 1e-12);
    CHECK(r.section_min == vec({0.8, 0.8}));
    CHECK(r.section_max == vec({0.8, 0.8}));
    CHECK(r.status() == Status::Pass);
  }
  SUBCASE("constant Hamiltonian") {
    auto t = FieldTheory::parse_hamiltonian(2, 1, "-2.5");
    auto cand = FieldHJCandidate::parse(c, {"0", "0"});
    CHECK(ham_field_hj_residual(t, cand, xy_grid()).residual.max_norm == 2.5);
  }
  SUBCASE("matches a direct evaluation") {
    auto cand = FieldHJCandidate::parse(c, {"t*y^2 + sin(x)", "x*y - y^3/3"});
    for (const Vector& z : xy_grid()) {
      const double t = z[0], x = z[1], y = z[2];
      const double s0 = 2 * t * y, s1 = x - y * y;
      const double expected = y * y + y + (s0 * s0 - s1 * s1) / 2;
      CHECK(std::abs(ham_field_hj_residual(wave, cand, {z}).residual.max_norm - std::abs(expected)) <= 1e-12);
    }
  }
}

TEST_CASE("Lagrangian and Hamiltonian field residuals agree under the Legendre map") {
  SUBCASE("wave theory") {
    auto l = FieldTheory::parse_lagrangian(2, 1, kWaveL);
    auto h = FieldTheory::parse_hamiltonian(2, 1, kWaveH);
    for (const auto& w : {std::vector<std::string>{"0.7*y", "0.7*y"}, {"t*y^2 + sin(x)", "x*y - y^3/3"}}) {
      auto cand = FieldHJCandidate::parse(l.chart(), w);
      ResidualReport r = field_legendre_consistency(l, cand, xy_grid(), 1e-9, &h);
      CHECK(r.n_skipped == 0);
      CHECK(r.max_norm <= 1e-9);
      CHECK(field_legendre_consistency(l, cand, xy_grid()).max_norm <= 1e-9);
    }
  }
  SUBCASE("nonlinear theory against its numerical Hamiltonian") {
    auto l = FieldTheory::parse_lagrangian(2, 1, "(yt^2 - yx^2)/2 + yt^4/12 + y^2/2");
    auto h = field_hamiltonian_from_lagrangian(l);
    auto cand = FieldHJCandidate::parse(l.chart(), {"t*y^2/3 + y", "y*sin(x)/2"});
    ResidualReport r = field_legendre_consistency(l, cand, xy_grid(), 1e-9, &h);
    CHECK(r.n_skipped == 0);
    CHECK(r.max_norm <= 1e-9);
  }
}

TEST_CASE("y-gradient of the Hamiltonian field residual") {
  auto h = FieldTheory::parse_hamiltonian(2, 2, "(p1_1^2 - p1_2^2 + p2_1^2 - p2_2^2)/2 + y1*y2*p1_2 + x1*y1^2");
  const FieldChart& c = h.chart();
  auto cand = FieldHJCandidate::parse(c, {"y1*y2*x2 + y1^2", "sin(y2)*x1 - y1^3/6"});
  for (const Vector& z : random_points(Vector::Constant(4, -1), Vector::Constant(4, 1), 20, 5)) {
    auto residual_in_y = [&](const Vector& y) {
      Vector xy(4);
      xy << z.head(2), y;
      const Vector s = induced_section(c, cand, xy);
      Vector full(8);
      full << xy, s;
      return cand.w[0].gradient(xy)[0] + cand.w[1].gradient(xy)[1] + h.hamiltonian()(full);
    };
    Vector oracle = oracle::fd_gradient(residual_in_y, Vector(z.tail(2)));
    CHECK((ham_field_residual_gradient(h, cand, z) - oracle).lpNorm<Eigen::Infinity>() <= 1e-6);
  }
}

TEST_CASE("a one-dimensional base reduces to mechanics") {
  std::vector<Vector> samples = linspace_points(-1.5, 1.5, 31);
  SUBCASE("oscillator with an arbitrary S") {
    auto sys = HamiltonianSystem::parse(1, "(p1^2 + q1^2)/2");
    GeneratingScalar s(ScalarField::compile("sin(q1) + q1^3/5", {"q1"}));
    MechanicsReductionReport r = mechanics_reduction_defect(sys, s, 0.3, samples);
    CHECK(r.value.max_norm <= 1e-10);
    CHECK(r.gradient.max_norm <= 1e-10);
    CHECK(r.status() == Status::Pass);
  }
  SUBCASE("the field residual equals H o dS - E") {
    auto sys = HamiltonianSystem::parse(1, "p1^2/2");
    auto theory = field_from_mechanics(sys);
    auto cand = FieldHJCandidate::parse(theory.chart(), {"2*y - 2*t"});
    CHECK(ham_field_hj_residual(theory, cand, Grid{vec({-1, -1}), vec({1, 1}), {3, 3}}.points()).residual.max_norm ==
          0.0);
  }
  SUBCASE("two degrees of freedom and a Hamiltonian without an expression") {
    auto lag = LagrangianSystem::parse(2, "v1^2/2 + v2^2/2 + v1^4/12 - q1^2*q2^2/2");
    HamiltonianSystem sys = hamiltonian_from_lagrangian(lag);
    GeneratingScalar s(ScalarField::compile("q1*q2/2 + q1^2/4", {"q1", "q2"}));
    MechanicsReductionReport r = mechanics_reduction_defect(
        sys, s, -0.1, random_points(vec({-1, -1}), vec({1, 1}), 25, 6));
    CHECK(r.value.n_skipped == 0);
    CHECK(r.value.max_norm <= 1e-10);
    CHECK(r.gradient.max_norm <= 1e-10);
  }
}

TEST_CASE("De Donder-Weyl evolution of the wave equation") {
  auto wave = FieldTheory::parse_hamiltonian(2, 1, kWaveH);
  SUBCASE("d'Alembert solution and energy") {
    PeriodicGrid g;
    const double t_end = 2 * std::numbers::pi;
    FieldFlowResult r = ddw_evolve(wave, g, wave_data(g), t_end, 1e-3, {1000});
    CHECK_FALSE(r.aborted);
    CHECK(r.t_reached == t_end);
    CHECK(r.warnings.empty());
    CHECK(dalembert_error(r, t_end) <= 5e-3);
    // The discrete energy of sin x on a uniform periodic grid is exactly pi / 2.
    CHECK(r.energy.front() == doctest::Approx(std::numbers::pi / 2).epsilon(1e-12));
    CHECK(r.energy_drift <= 1e-3);
    CHECK(r.constraint_drift <= 1e-10);
  }
  SUBCASE("zero data stays zero") {
    PeriodicGrid g{64};
    FieldState zero{Matrix::Zero(64, 1), Matrix::Zero(64, 1), Matrix::Zero(64, 1)};
    FieldFlowResult r = ddw_evolve(wave, g, zero, 1.0, 1e-2);
    CHECK(r.final_state().y == Matrix::Zero(64, 1));
    CHECK(r.final_state().p0 == Matrix::Zero(64, 1));
    CHECK(r.final_state().p1 == Matrix::Zero(64, 1));
  }
  SUBCASE("second-order spatial convergence") {
    std::vector<double> errors;
    for (int points : {16, 32, 64}) {
      PeriodicGrid g{points};
      errors.push_back(dalembert_error(ddw_evolve(wave, g, wave_data(g), 2.0, 1e-3), 2.0));
    }
    for (std::size_t i = 1; i < errors.size(); ++i) {
      const double order = std::log2(errors[i - 1] / errors[i]);
      INFO("observed order " << order);
      CHECK(order >= 1.4);
      CHECK(order <= 2.6);
    }
  }
}

TEST_CASE("De Donder-Weyl evolution matches a direct method-of-lines oracle") {
  // Klein-Gordon: y_tt = D(D y) - y with the same centred difference D.
  auto kg = FieldTheory::parse_hamiltonian(2, 1, "(pt^2 - px^2)/2 + y^2/2");
  PeriodicGrid g{32};
  FieldState init = sample_field_data(kg.chart(), g, {"sin(x) + cos(2*x)/2"}, {"cos(3*x)/3"}, {"0"});
  init.p1 = -centred_difference(init.y, g.dx());
  FieldFlowResult r = ddw_evolve(kg, g, init, 1.0, 1e-3);
  const double dx = g.dx();
  auto rhs = [dx](const Vector& s) {
    const Eigen::Index n = s.size() / 2;
    Matrix y = s.head(n);
    Matrix dyy = centred_difference(centred_difference(y, dx), dx);
    Vector out(2 * n);
    out << s.tail(n), dyy.col(0) - s.head(n);
    return out;
  };
  Vector s0(64);
  s0 << init.y.col(0), init.p0.col(0);
  Vector reference = oracle::rk4(rhs, s0, 1.0, 1000);
  CHECK((r.final_state().y.col(0) - reference.head(32)).lpNorm<Eigen::Infinity>() <= 1e-10);
  CHECK((r.final_state().p0.col(0) - reference.tail(32)).lpNorm<Eigen::Infinity>() <= 1e-10);
}

TEST_CASE("De Donder-Weyl evolution with a nonlinear constraint") {
  // dH/dpx = -px - px^3 makes the p1 equation genuinely implicit.
  auto t = FieldTheory::parse_hamiltonian(2, 1, "(pt^2 - px^2)/2 - px^4/4");
  PeriodicGrid g{64};
  FieldState init = sample_field_data(t.chart(), g, {"0"}, {"sin(x)/5"}, {"0"});
  FieldFlowResult r = ddw_evolve(t, g, init, 2.0, 1e-3);
  CHECK_FALSE(r.aborted);
  CHECK(r.initial_constraint == 0.0);
  CHECK(r.constraint_drift <= 1e-9);
  CHECK(r.energy_drift <= 1e-6);
}

TEST_CASE("De Donder-Weyl evolution diagnostics") {
  auto wave = FieldTheory::parse_hamiltonian(2, 1, kWaveH);
  SUBCASE("inconsistent p1 and a large time step") {
    PeriodicGrid g{16};
    FieldState init = sample_field_data(wave.chart(), g, {"sin(x)"}, {"0"}, {"0"});
    FieldFlowResult r = ddw_evolve(wave, g, init, 1.0, 0.5);
    CHECK(r.warnings.size() == 2);
    CHECK(r.initial_constraint > 0.9);
  }
  SUBCASE("blow-up stops the evolution") {
    auto t = FieldTheory::parse_hamiltonian(2, 1, "(pt^2 - px^2)/2 - y^3");
    PeriodicGrid g{8};
    FieldState init{Matrix::Constant(8, 1, 10.0), Matrix::Zero(8, 1), Matrix::Zero(8, 1)};
    FieldFlowResult r = ddw_evolve(t, g, init, 5.0, 1e-2);
    CHECK(r.aborted);
    CHECK(r.t_reached < 1.0);
    CHECK(r.warnings.size() == 1);
  }
  SUBCASE("only m = 2 evolves") {
    auto t = FieldTheory::parse_hamiltonian(1, 1, "pt^2/2");
    PeriodicGrid g{8};
    FieldState init{Matrix::Zero(8, 1), Matrix::Zero(8, 1), Matrix::Zero(8, 1)};
    CHECK_THROWS_AS(ddw_evolve(t, g, init, 1.0, 0.1), DimensionMismatch);
  }
}

TEST_CASE("periodic derivatives") {
  PeriodicGrid g{32};
  const Vector x = g.nodes();
  Matrix f(32, 2);
  for (int j = 0; j < 32; ++j) f.row(j) << std::sin(3 * x[j]), std::cos(x[j]) + 0.5;
  Matrix exact(32, 2);
  for (int j = 0; j < 32; ++j) exact.row(j) << 3 * std::cos(3 * x[j]), -std::sin(x[j]);
  CHECK((spectral_difference(f, g.length) - exact).lpNorm<Eigen::Infinity>() <= 1e-12);
  // The centred difference of sin(k x) is sin(k dx) / dx cos(k x).
  const Matrix d = centred_difference(f, g.dx());
  for (int j = 0; j < 32; ++j)
    CHECK(std::abs(d(j, 0) - std::sin(3 * g.dx()) / g.dx() * std::cos(3 * x[j])) <= 1e-12);
}
